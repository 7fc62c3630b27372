#include "sep/harness.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

namespace sep {

namespace {

constexpr double kPi = 3.14159265358979323846;

double db_ratio(double num, double den) {
    if (den <= 0.0) return kMetricCapDb;
    if (num <= 0.0) return -kMetricCapDb;
    return std::clamp(10.0 * std::log10(num / den), -kMetricCapDb, kMetricCapDb);
}

double median_of(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

} // namespace

void SyntheticSpec::validate() const {
    prior.validate();
    if (M < 1 || N < 1 || T < 1) throw ContractError("SyntheticSpec: M, N, T must be >= 1");
    if (num_instances < 1) throw ContractError("SyntheticSpec: num_instances must be >= 1");
    if (matrix_kind == MatrixKind::unit_column_mixing && M != 2)
        throw ContractError("SyntheticSpec: unit_column_mixing is the stereo convention (M = 2)");
}

Instance generate_instance(const SyntheticSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    Instance inst;
    inst.model.A.resize(spec.M, spec.N);
    const int mhat = spec.M * spec.T, nhat = spec.N * spec.T;
    if (spec.matrix_kind == MatrixKind::iid_gaussian) {
        const double sd = 1.0 / std::sqrt(static_cast<double>(mhat));
        for (int i = 0; i < spec.M; ++i)
            for (int j = 0; j < spec.N; ++j) inst.model.A(i, j) = sd * gauss(rng);
    } else {
        // unit columns at distinct angles spread over (0, pi/2)
        for (int j = 0; j < spec.N; ++j) {
            const double phi = kPi * (j + 1) / (2.0 * (spec.N + 1));
            inst.model.A(0, j) = std::cos(phi);
            inst.model.A(1, j) = std::sin(phi);
        }
    }

    inst.x.assign(static_cast<size_t>(nhat), 0.0);
    for (int i = 0; i < nhat; ++i)
        if (unif(rng) < spec.prior.rho)
            inst.x[static_cast<size_t>(i)] = spec.prior.mu + std::sqrt(spec.prior.sigma2) * gauss(rng);

    const bool noiseless = std::isinf(spec.snr_db);
    const double second_moment = spec.prior.rho * (spec.prior.mu * spec.prior.mu + spec.prior.sigma2);
    double gamma_w;
    if (noiseless || second_moment <= 0.0) {
        // no noise, or no signal to set an SNR against; park gamma_w at the clamp
        gamma_w = noiseless ? kEmClampHi : 1.0;
    } else {
        gamma_w = init_noise_precision(spec.prior, mhat, nhat, spec.snr_db);
    }
    inst.model.gamma_w = gamma_w;

    const BlockOperator op(inst.model, spec.T);
    inst.y = apply_forward(op, inst.x);
    if (!noiseless) {
        const double sd = 1.0 / std::sqrt(gamma_w);
        for (auto& v : inst.y) v += sd * gauss(rng);
    }
    return inst;
}

MetricReport compute_metrics(const std::vector<std::vector<double>>& estimates,
                             const std::vector<std::vector<double>>& references) {
    if (estimates.size() != references.size() || estimates.empty())
        throw ContractError("compute_metrics: estimate/reference count mismatch");
    const size_t K = references.front().size();
    for (const auto& v : references)
        if (v.size() != K) throw ContractError("compute_metrics: reference length mismatch");
    for (const auto& v : estimates)
        if (v.size() != K) throw ContractError("compute_metrics: estimate length mismatch");

    const int N = static_cast<int>(references.size());
    Eigen::MatrixXd S(static_cast<long>(K), N);
    for (int j = 0; j < N; ++j)
        for (size_t i = 0; i < K; ++i) S(static_cast<long>(i), j) = references[j][i];

    double all_zero = S.norm();
    if (all_zero == 0.0) throw ContractError("compute_metrics: references are all zero");

    // project onto the span of the live references only; a zero column would
    // make the plain QR solve emit NaNs that poison every other source
    std::vector<int> live;
    for (int j = 0; j < N; ++j)
        if (S.col(j).squaredNorm() > 0.0) live.push_back(j);
    Eigen::MatrixXd S_live(static_cast<long>(K), static_cast<long>(live.size()));
    for (size_t j = 0; j < live.size(); ++j) S_live.col(static_cast<long>(j)) = S.col(live[j]);
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(S_live);

    MetricReport rep;
    rep.per_source_sdr.resize(N);
    rep.per_source_sir.resize(N);
    rep.per_source_sar.resize(N);
    rep.degenerate.assign(N, false);

    double err2 = 0.0, ref2 = 0.0;
    for (int i = 0; i < N; ++i) {
        Eigen::VectorXd e(static_cast<long>(K));
        for (size_t k = 0; k < K; ++k) e(static_cast<long>(k)) = estimates[i][k];
        const Eigen::VectorXd si = S.col(i);
        const double si2 = si.squaredNorm();
        for (size_t k = 0; k < K; ++k) {
            const double d = estimates[i][k] - references[i][k];
            err2 += d * d;
        }
        ref2 += si2;
        if (si2 == 0.0) {
            rep.degenerate[i] = true;
            rep.per_source_sdr[i] = rep.per_source_sir[i] = rep.per_source_sar[i] = 0.0;
            continue;
        }
        const Eigen::VectorXd s_target = (e.dot(si) / si2) * si;
        const Eigen::VectorXd p_all = S_live * qr.solve(e);  // projection onto span of references
        const Eigen::VectorXd e_interf = p_all - s_target;
        const Eigen::VectorXd e_artif = e - p_all;
        const double t2 = s_target.squaredNorm();
        const double i2 = e_interf.squaredNorm();
        const double a2 = e_artif.squaredNorm();
        rep.per_source_sdr[i] = db_ratio(t2, i2 + a2);
        rep.per_source_sir[i] = db_ratio(t2, i2);
        rep.per_source_sar[i] = db_ratio(t2 + i2, a2);
    }
    rep.nmse_db = db_ratio(err2, ref2);
    return rep;
}

namespace {

// split a stacked N*T vector into N sources of length T
std::vector<std::vector<double>> split_sources(const std::vector<double>& x, int N, int T) {
    std::vector<std::vector<double>> out(static_cast<size_t>(N));
    for (int j = 0; j < N; ++j)
        out[j].assign(x.begin() + static_cast<long>(j) * T, x.begin() + static_cast<long>(j + 1) * T);
    return out;
}

struct PointStats {
    std::vector<double> nmse, sdr, sir, sar;
    int failures = 0;
};

PointStats run_point(const SyntheticSpec& spec, Algo algo, double theta, int max_iter,
                     const SweepOptions& opts) {
    PointStats st;
    for (int k = 0; k < spec.num_instances; ++k) {
        SyntheticSpec si = spec;
        si.seed = spec.seed + static_cast<uint64_t>(k);
        const Instance inst = generate_instance(si);
        const BlockOperator op(inst.model, spec.T);
        const BgDenoiser denoiser(spec.prior);
        try {
            std::vector<double> xhat;
            if (algo == Algo::amp) {
                AmpConfig c;
                c.theta = theta;
                c.max_iter = max_iter;
                c.tol = opts.tol;
                c.gamma_w = inst.model.gamma_w;
                c.gamma0 = prior_precision(spec.prior);
                c.em_noise = opts.em_noise;
                c.gamma_update = opts.gamma_update;
                xhat = amp_run(op, inst.y, denoiser, c).xhat;
            } else {
                VampConfig c;
                c.theta = theta;
                c.max_iter = max_iter;
                c.tol = opts.tol;
                c.gamma_w = inst.model.gamma_w;
                c.gamma0 = prior_precision(spec.prior);
                c.em_noise = opts.em_noise;
                c.gamma_tilde_form = opts.gamma_tilde_form;
                xhat = vamp_run(vamp_precompute(op, inst.y), denoiser, c).xhat;
            }
            const MetricReport rep = compute_metrics(split_sources(xhat, spec.N, spec.T),
                                                     split_sources(inst.x, spec.N, spec.T));
            st.nmse.push_back(rep.nmse_db);
            st.sdr.push_back(mean_of(rep.per_source_sdr));
            st.sir.push_back(mean_of(rep.per_source_sir));
            st.sar.push_back(mean_of(rep.per_source_sar));
        } catch (const DivergenceError&) {
            ++st.failures;
        } catch (const DegeneracyError&) {
            ++st.failures;
        }
    }
    return st;
}

} // namespace

std::string sweep(const SyntheticSpec& spec, Algo algo, const SweepGrid& grid,
                  const SweepOptions& opts) {
    spec.validate();
    if (grid.thetas.empty() || grid.max_iters.empty())
        throw ContractError("sweep: empty grid");

    struct Point {
        double theta;
        int max_iter;
    };
    std::vector<Point> points;
    for (double th : grid.thetas)
        for (int it : grid.max_iters) points.push_back({th, it});

    std::vector<PointStats> stats(points.size());
    std::atomic<size_t> next{0};
    auto work = [&]() {
        for (;;) {
            const size_t p = next.fetch_add(1);
            if (p >= points.size()) return;
            stats[p] = run_point(spec, algo, points[p].theta, points[p].max_iter, opts);
        }
    };
    int workers = opts.parallel;
    if (workers <= 0) {
        const unsigned hw = std::thread::hardware_concurrency();
        workers = static_cast<int>(hw == 0 ? 1 : std::min(hw, 8u));
    }
    workers = std::min<int>(workers, static_cast<int>(points.size()));
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }

    std::ostringstream csv;
    csv << "algo,theta,max_iter,metric,mean,median,failures\n";
    csv << std::setprecision(10);
    const char* aname = algo == Algo::amp ? "amp" : "vamp";
    for (size_t p = 0; p < points.size(); ++p) {
        const PointStats& st = stats[p];
        const struct {
            const char* name;
            const std::vector<double>* v;
        } rows[] = {{"nmse_db", &st.nmse}, {"sdr", &st.sdr}, {"sir", &st.sir}, {"sar", &st.sar}};
        for (const auto& row : rows)
            csv << aname << ',' << points[p].theta << ',' << points[p].max_iter << ',' << row.name
                << ',' << mean_of(*row.v) << ',' << median_of(*row.v) << ',' << st.failures << '\n';
    }
    return csv.str();
}

} // namespace sep
