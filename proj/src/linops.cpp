#include "sep/linops.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace sep {

void MixingModel::validate() const {
    if (A.rows() < 1 || A.cols() < 1)
        throw ContractError("MixingModel: need M >= 1 and N >= 1, got " +
                            std::to_string(A.rows()) + "x" + std::to_string(A.cols()));
    if (!A.allFinite()) throw ContractError("MixingModel: non-finite entry in A");
    if (!(gamma_w > 0.0) || !std::isfinite(gamma_w))
        throw ContractError("MixingModel: gamma_w must be positive, got " + std::to_string(gamma_w));
}

MixingModel load_mixing_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ContractError("cannot open mixing matrix CSV: " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                size_t pos = 0;
                double v = std::stod(cell, &pos);
                while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
                if (pos != cell.size()) throw std::invalid_argument(cell);
                row.push_back(v);
            } catch (const std::exception&) {
                throw ContractError("malformed CSV cell '" + cell + "' in " + path);
            }
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw ContractError("ragged CSV row in " + path);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ContractError("empty mixing matrix CSV: " + path);
    MixingModel m;
    m.A.resize(static_cast<long>(rows.size()), static_cast<long>(rows.front().size()));
    for (long i = 0; i < m.A.rows(); ++i)
        for (long j = 0; j < m.A.cols(); ++j) m.A(i, j) = rows[i][j];
    m.validate();
    return m;
}

std::vector<double> kron_apply(const Eigen::MatrixXd& B, const std::vector<double>& v, int T) {
    const long p = B.rows(), q = B.cols();
    if (static_cast<long>(v.size()) != q * T)
        throw ContractError("kron_apply: expected length " + std::to_string(q * T) +
                            ", got " + std::to_string(v.size()));
    std::vector<double> out(static_cast<size_t>(p * T), 0.0);
    for (long i = 0; i < p; ++i) {
        double* oi = out.data() + i * T;
        for (long j = 0; j < q; ++j) {
            const double b = B(i, j);
            if (b == 0.0) continue;
            const double* vj = v.data() + j * T;
            for (int t = 0; t < T; ++t) oi[t] += b * vj[t];
        }
    }
    return out;
}

std::vector<double> apply_forward(const BlockOperator& op, const std::vector<double>& x) {
    if (static_cast<int>(x.size()) != op.nhat())
        throw ContractError("apply_forward: expected length " + std::to_string(op.nhat()) +
                            ", got " + std::to_string(x.size()));
    return kron_apply(op.base.A, x, op.T);
}

std::vector<double> apply_adjoint(const BlockOperator& op, const std::vector<double>& s) {
    if (static_cast<int>(s.size()) != op.mhat())
        throw ContractError("apply_adjoint: expected length " + std::to_string(op.mhat()) +
                            ", got " + std::to_string(s.size()));
    return kron_apply(op.base.A.transpose(), s, op.T);
}

SvdFactors economy_svd(const BlockOperator& op) {
    const Eigen::MatrixXd& A = op.base.A;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();
    // numerical rank: threshold at max(M,N) * eps * s_max
    const double smax = sv.size() ? sv(0) : 0.0;
    const double thresh = std::max(A.rows(), A.cols()) *
                          std::numeric_limits<double>::epsilon() * smax;
    int r0 = 0;
    for (long k = 0; k < sv.size(); ++k)
        if (sv(k) > thresh) ++r0;
    SvdFactors f;
    f.U0 = svd.matrixU().leftCols(r0);
    f.s0 = sv.head(r0);
    f.V0 = svd.matrixV().leftCols(r0);
    f.T = op.T;
    f.R = r0 * op.T;
    return f;
}

std::vector<double> SvdFactors::singular_values() const {
    std::vector<double> s(static_cast<size_t>(R));
    for (int k = 0; k < rank_small(); ++k)
        for (int t = 0; t < T; ++t) s[static_cast<size_t>(k) * T + t] = s0(k);
    return s;
}

Eigen::MatrixXd SvdFactors::dense_U() const {
    Eigen::MatrixXd U = Eigen::MatrixXd::Zero(U0.rows() * T, R);
    for (long i = 0; i < U0.rows(); ++i)
        for (int k = 0; k < rank_small(); ++k)
            for (int t = 0; t < T; ++t) U(i * T + t, static_cast<long>(k) * T + t) = U0(i, k);
    return U;
}

Eigen::MatrixXd SvdFactors::dense_V() const {
    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(V0.rows() * T, R);
    for (long j = 0; j < V0.rows(); ++j)
        for (int k = 0; k < rank_small(); ++k)
            for (int t = 0; t < T; ++t) V(j * T + t, static_cast<long>(k) * T + t) = V0(j, k);
    return V;
}

std::vector<double> SvdFactors::apply_Ut(const std::vector<double>& y) const {
    return kron_apply(U0.transpose(), y, T);
}
std::vector<double> SvdFactors::apply_U(const std::vector<double>& z) const {
    return kron_apply(U0, z, T);
}
std::vector<double> SvdFactors::apply_Vt(const std::vector<double>& x) const {
    return kron_apply(V0.transpose(), x, T);
}
std::vector<double> SvdFactors::apply_V(const std::vector<double>& z) const {
    return kron_apply(V0, z, T);
}

Eigen::MatrixXd materialize_dense(const BlockOperator& op, long cap) {
    const long mh = op.mhat(), nh = op.nhat();
    if (mh * nh > cap)
        throw ContractError("materialize_dense: " + std::to_string(mh * nh) +
                            " entries exceeds cap " + std::to_string(cap));
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(mh, nh);
    for (int i = 0; i < op.base.rows(); ++i)
        for (int j = 0; j < op.base.cols(); ++j) {
            const double a = op.base.A(i, j);
            for (int t = 0; t < op.T; ++t)
                D(static_cast<long>(i) * op.T + t, static_cast<long>(j) * op.T + t) = a;
        }
    return D;
}

} // namespace sep
