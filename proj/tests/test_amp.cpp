#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "sep/amp.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

using namespace sep;

namespace {

MixingModel random_model(int M, int N, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0 / std::sqrt(static_cast<double>(M)));
    MixingModel m;
    m.A.resize(M, N);
    for (long i = 0; i < M; ++i)
        for (long j = 0; j < N; ++j) m.A(i, j) = g(rng);
    return m;
}

std::vector<double> random_vec(size_t n, std::mt19937_64& rng, double sd = 1.0) {
    std::normal_distribution<double> g(0.0, sd);
    std::vector<double> v(n);
    for (auto& x : v) x = g(rng);
    return v;
}

double rel_err(const std::vector<double>& a, const Eigen::VectorXd& b) {
    double dn = 0.0, bn = 0.0;
    for (long i = 0; i < b.size(); ++i) {
        const double d = a[static_cast<size_t>(i)] - b(i);
        dn += d * d;
        bn += b(i) * b(i);
    }
    return std::sqrt(dn / bn);
}

// Undamped Alg. 1 lines 3-7, transcribed without the damping terms.
AmpState undamped_step(const AmpState& st, const BlockOperator& op, const std::vector<double>& y,
                       const Denoiser& den, double gamma_w) {
    const size_t nh = st.xhat.size(), mh = st.s.size();
    AmpState next = st;
    const DenoiserOutput g = den.denoise(st.r, st.gamma);
    next.xhat = g.xhat;
    double mean_d = 0.0;
    for (double d : g.dxdr) mean_d += d;
    mean_d /= static_cast<double>(nh);
    next.tau_p = (static_cast<double>(nh) / mh) * (1.0 / st.gamma) * mean_d;
    const std::vector<double> ax = apply_forward(op, next.xhat);
    const double scale = 1.0 / (1.0 / gamma_w + next.tau_p);
    for (size_t i = 0; i < mh; ++i) next.s[i] = scale * (y[i] - ax[i] + next.tau_p * st.s[i]);
    next.gamma = scale;
    const std::vector<double> ats = apply_adjoint(op, next.s);
    for (size_t i = 0; i < nh; ++i) next.r[i] = next.xhat[i] + (1.0 / next.gamma) * ats[i];
    next.iter = st.iter + 1;
    return next;
}

} // namespace

TEST_CASE("AmpConfig validation") {
    AmpConfig c;
    CHECK_NOTHROW(c.validate());
    for (int mi : {5, 10, 15, 20, 25, 30, 35, 40, 45, 50}) {
        c.max_iter = mi;  // the sweep grid is all legal
        CHECK_NOTHROW(c.validate());
    }
    c.max_iter = 0;
    CHECK_THROWS_AS(c.validate(), ContractError);
    c.max_iter = 30;
    c.theta = 0.0;
    CHECK_THROWS_AS(c.validate(), ContractError);
    c.theta = 1.1;
    CHECK_THROWS_AS(c.validate(), ContractError);
    c.theta = 1.0;
    c.tol = -1.0;
    CHECK_THROWS_AS(c.validate(), ContractError);
    c.tol = 0.0;
    c.gamma_w = 0.0;
    CHECK_THROWS_AS(c.validate(), ContractError);
}

TEST_CASE("amp_init zeroes the state and adopts gamma0") {
    std::mt19937_64 rng(2);
    BlockOperator op(random_model(3, 5, rng), 2);
    const std::vector<double> y = random_vec(6, rng);
    AmpConfig cfg;
    cfg.gamma0 = 0.25;
    const AmpState st = amp_init(op, y, cfg);
    CHECK(st.iter == 0);
    CHECK(st.gamma == 0.25);
    for (double v : st.s) CHECK(v == 0.0);
    for (double v : st.r) CHECK(v == 0.0);
    for (double v : st.xhat) CHECK(v == 0.0);
    CHECK_THROWS_AS(amp_init(op, std::vector<double>(5), cfg), ContractError);
}

TEST_CASE("matched-filter init scales the adjoint image") {
    MixingModel m;
    m.A.resize(1, 1);
    m.A(0, 0) = 2.0;
    BlockOperator op(m, 2);  // frob_sq = 8, nhat = 2
    AmpConfig cfg;
    cfg.r0_init = RInit::matched_filter;
    const AmpState st = amp_init(op, {1.0, 3.0}, cfg);
    CHECK(st.r[0] == doctest::Approx(0.5));
    CHECK(st.r[1] == doctest::Approx(1.5));
}

TEST_CASE("iteration budget is honored") {
    std::mt19937_64 rng(4);
    BlockOperator op(random_model(4, 8, rng), 1);
    const std::vector<double> y = random_vec(4, rng);
    BgDenoiser den(BgPrior{});
    AmpConfig cfg;
    cfg.gamma_w = 100.0;
    cfg.gamma0 = prior_precision(BgPrior{});

    SUBCASE("max_iter = 1 takes exactly one step") {
        cfg.max_iter = 1;
        CHECK(amp_run(op, y, den, cfg).diagnostics.iterations == 1);
    }
    SUBCASE("tol = 0 runs to the cap") {
        cfg.max_iter = 17;
        cfg.tol = 0.0;
        const AmpResult r = amp_run(op, y, den, cfg);
        CHECK(r.diagnostics.iterations == 17);
        CHECK(r.diagnostics.iters.size() == 17);
    }
}

TEST_CASE("noiseless identity recovers y") {
    MixingModel m;
    m.A = Eigen::MatrixXd::Identity(1, 1);
    BlockOperator op(m, 1);
    BgPrior p;
    p.rho = 1.0;
    p.mu = 0.0;
    p.sigma2 = 5.0;
    BgDenoiser den(p);
    AmpConfig cfg;
    cfg.gamma_w = 1e8;
    cfg.gamma0 = prior_precision(p);
    // on the scalar identity gamma climbs by only gamma0 per step, so the
    // approach to y is O(1/iter); give it room
    cfg.max_iter = 3000;
    cfg.tol = 1e-12;
    const std::vector<double> y{3.7};
    const AmpResult r = amp_run(op, y, den, cfg);
    CHECK(std::abs(r.xhat[0] - 3.7) / 3.7 <= 1e-3);
}

TEST_CASE("Gaussian-prior fixed point is the LMMSE solution") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    BgPrior p;
    p.rho = 1.0;
    p.mu = 0.0;
    p.sigma2 = 2.0;
    BgDenoiser den(p);
    const double gamma_w = 50.0;
    for (int inst = 0; inst < 10; ++inst) {
        MixingModel m;
        m.A.resize(40, 80);
        for (long i = 0; i < 40; ++i)
            for (long j = 0; j < 80; ++j) m.A(i, j) = g(rng) / std::sqrt(40.0);
        // observations drawn from the model itself
        Eigen::VectorXd x(80);
        for (long j = 0; j < 80; ++j) x(j) = std::sqrt(p.sigma2) * g(rng);
        Eigen::VectorXd yv = m.A * x;
        for (long i = 0; i < 40; ++i) yv(i) += g(rng) / std::sqrt(gamma_w);
        const std::vector<double> y(yv.data(), yv.data() + 40);
        BlockOperator op(m, 1);

        AmpConfig cfg;
        cfg.theta = 1.0;
        cfg.max_iter = 200;
        cfg.tol = 1e-12;
        cfg.gamma_w = gamma_w;
        cfg.gamma0 = prior_precision(p);
        const AmpResult r = amp_run(op, y, den, cfg);

        const Eigen::MatrixXd H =
            gamma_w * m.A.transpose() * m.A + (1.0 / p.sigma2) * Eigen::MatrixXd::Identity(80, 80);
        const Eigen::VectorXd lmmse = H.ldlt().solve(gamma_w * m.A.transpose() * yv);
        CHECK(rel_err(r.xhat, lmmse) <= 1e-4);
    }
}

TEST_CASE("theta = 1 equals the undamped transcription") {
    std::mt19937_64 rng(8);
    BlockOperator op(random_model(6, 10, rng), 2);
    const std::vector<double> y = random_vec(12, rng);
    BgDenoiser den(BgPrior{});
    AmpConfig cfg;
    cfg.theta = 1.0;
    cfg.gamma_w = 30.0;
    cfg.gamma0 = prior_precision(BgPrior{});

    AmpState a = amp_init(op, y, cfg);
    AmpState b = a;
    for (int t = 0; t < 5; ++t) {
        a = amp_step(a, op, y, den, cfg);
        b = undamped_step(b, op, y, den, cfg.gamma_w);
        CHECK(a.gamma == b.gamma);
        CHECK(a.tau_p == b.tau_p);
        for (size_t i = 0; i < a.xhat.size(); ++i) CHECK(a.xhat[i] == b.xhat[i]);
        for (size_t i = 0; i < a.s.size(); ++i) CHECK(a.s[i] == b.s[i]);
        for (size_t i = 0; i < a.r.size(); ++i) CHECK(a.r[i] == b.r[i]);
    }
}

TEST_CASE("runs are deterministic") {
    std::mt19937_64 rng(14);
    BlockOperator op(random_model(10, 20, rng), 3);
    const std::vector<double> y = random_vec(30, rng);
    BgDenoiser den(BgPrior{});
    AmpConfig cfg;
    cfg.theta = 0.8;
    cfg.max_iter = 25;
    cfg.gamma_w = 200.0;
    cfg.gamma0 = prior_precision(BgPrior{});
    const AmpResult r1 = amp_run(op, y, den, cfg);
    const AmpResult r2 = amp_run(op, y, den, cfg);
    REQUIRE(r1.xhat.size() == r2.xhat.size());
    for (size_t i = 0; i < r1.xhat.size(); ++i) CHECK(r1.xhat[i] == r2.xhat[i]);
    CHECK(r1.diagnostics.iterations == r2.diagnostics.iterations);
    for (double v : r1.xhat) CHECK(std::isfinite(v));
}

TEST_CASE("EM refreshes the working noise precision from the residual") {
    std::mt19937_64 rng(21);
    BlockOperator op(random_model(8, 16, rng), 1);
    const std::vector<double> y = random_vec(8, rng);
    BgDenoiser den(BgPrior{});
    AmpConfig cfg;
    cfg.em_noise = true;
    cfg.gamma_w = 123.0;
    cfg.gamma0 = prior_precision(BgPrior{});
    const AmpState st1 = amp_step(amp_init(op, y, cfg), op, y, den, cfg);
    const double r2 = st1.resid_norm * st1.resid_norm;
    const double want = std::clamp(8.0 / (r2 + 8.0 * st1.tau_p), kEmClampLo, kEmClampHi);
    CHECK(st1.gamma_w == doctest::Approx(want).epsilon(1e-14));

    cfg.em_noise = false;
    const AmpState off = amp_step(amp_init(op, y, cfg), op, y, den, cfg);
    CHECK(off.gamma_w == 123.0);
}

TEST_CASE("divergence reports the iteration and keeps partial diagnostics") {
    // non-zero-mean sensing matrix: the canonical AMP breaker
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g(0.0, 1.0 / std::sqrt(20.0));
    MixingModel m;
    m.A.resize(20, 40);
    for (long i = 0; i < 20; ++i)
        for (long j = 0; j < 40; ++j) m.A(i, j) = 1.0 + g(rng);
    BlockOperator op(m, 1);
    const std::vector<double> y = random_vec(20, rng);
    BgPrior p;
    p.rho = 0.1;
    BgDenoiser den(p);
    AmpConfig cfg;
    cfg.theta = 1.0;
    cfg.max_iter = 200;
    cfg.tol = 0.0;
    cfg.gamma_w = 1000.0;
    cfg.gamma0 = prior_precision(p);
    try {
        amp_run(op, y, den, cfg);
        FAIL("expected SolverDivergenceError");
    } catch (const SolverDivergenceError& e) {
        CHECK(e.iter >= 1);
        CHECK(e.diagnostics.diverged);
        CHECK(e.diagnostics.divergence_iter == e.iter);
        CHECK(e.diagnostics.iters.size() >= 1);
        CHECK(e.diagnostics.iters.size() <= 200);
    }
}
