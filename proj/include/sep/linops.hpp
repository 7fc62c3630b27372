#ifndef SEP_LINOPS_HPP
#define SEP_LINOPS_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "sep/errors.hpp"

namespace sep {

// Instantaneous mixing model: y(t) = A x(t) + w(t), w ~ N(0, gamma_w^{-1} I).
struct MixingModel {
    Eigen::MatrixXd A;     // M x N gain matrix
    double gamma_w = 1.0;  // noise precision, > 0

    int rows() const { return static_cast<int>(A.rows()); }
    int cols() const { return static_cast<int>(A.cols()); }
    void validate() const;
};

MixingModel load_mixing_csv(const std::string& path);

// Block expansion Ahat = A (x) I_T acting on stacked coefficient vectors
// xhat = [X_1(0..T-1), X_2(0..T-1), ...]. Never materialized unless asked.
struct BlockOperator {
    MixingModel base;
    int T = 1;

    BlockOperator(MixingModel m, int block) : base(std::move(m)), T(block) {
        base.validate();
        if (T < 1) throw ContractError("BlockOperator: T must be >= 1, got " + std::to_string(T));
    }

    int mhat() const { return base.rows() * T; }
    int nhat() const { return base.cols() * T; }
    double frob_sq() const { return base.A.squaredNorm() * T; }
};

// Economy SVD of Ahat held in factored form: U = U0 (x) I_T, s = s0 (x) 1_T,
// V = V0 (x) I_T, R = rank(A) * T. U0/V0 are the thin factors of the small A.
struct SvdFactors {
    Eigen::MatrixXd U0;  // M x R0
    Eigen::VectorXd s0;  // R0, nonincreasing, > 0
    Eigen::MatrixXd V0;  // N x R0
    int T = 1;
    int R = 0;  // = R0 * T

    int rank_small() const { return static_cast<int>(s0.size()); }

    // Expanded singular values s0 (x) 1_T (nonincreasing since s0 is).
    std::vector<double> singular_values() const;

    // Dense expansions, test support only.
    Eigen::MatrixXd dense_U() const;
    Eigen::MatrixXd dense_V() const;

    // Structured products with the expanded factors.
    std::vector<double> apply_Ut(const std::vector<double>& y) const;  // R = U^T y
    std::vector<double> apply_U(const std::vector<double>& z) const;   // Mhat
    std::vector<double> apply_Vt(const std::vector<double>& x) const;  // R
    std::vector<double> apply_V(const std::vector<double>& z) const;   // Nhat
};

// (B (x) I_T) v for a small dense B; the workhorse behind every structured product.
std::vector<double> kron_apply(const Eigen::MatrixXd& B, const std::vector<double>& v, int T);

std::vector<double> apply_forward(const BlockOperator& op, const std::vector<double>& x);
std::vector<double> apply_adjoint(const BlockOperator& op, const std::vector<double>& s);
SvdFactors economy_svd(const BlockOperator& op);

inline constexpr long kMaterializeCapDefault = 10000000;  // entries
Eigen::MatrixXd materialize_dense(const BlockOperator& op, long cap = kMaterializeCapDefault);

} // namespace sep

#endif
