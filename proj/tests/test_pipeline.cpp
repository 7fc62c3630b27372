#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "sep/harness.hpp"
#include "sep/pipeline.hpp"
#include "sep/stft.hpp"

using namespace sep;

namespace {

// Sparse-in-frequency test source: a fixed random support per source, fresh
// Gaussian amplitudes per frame, then overlap-add synthesis.  Skipping the
// lowest packed coords keeps DC/near-DC out of the signal.
std::vector<double> sparse_source(const StftConfig& stft, size_t len, double support_frac,
                                  std::mt19937_64& rng) {
    const int T = stft.trunc_len;
    const int nframes = 1 + static_cast<int>((len - stft.frame_len) / stft.hop());
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<int> support;
    for (int t = 4; t < T; ++t)
        if (u(rng) < support_frac) support.push_back(t);
    PackedSpectrogram spec;
    spec.config = stft;
    spec.original_len = len;
    spec.frames.assign(static_cast<size_t>(nframes), std::vector<double>(static_cast<size_t>(T), 0.0));
    for (auto& fr : spec.frames)
        for (int t : support) fr[static_cast<size_t>(t)] = std::sqrt(5.0) * g(rng);
    return synthesize(spec);
}

// Three sources from one seeded stream; [0],[1] drive the identity cases,
// [2] the single-source case.
std::vector<std::vector<double>> probe_sources(const StftConfig& stft, size_t len) {
    std::mt19937_64 rng(42);
    std::vector<std::vector<double>> s;
    for (int k = 0; k < 3; ++k) s.push_back(sparse_source(stft, len, 0.05, rng));
    return s;
}

// Relative L2 error away from the synthesis edge taper (one frame each side).
double rel_interior(const std::vector<double>& got, const std::vector<double>& want) {
    REQUIRE(got.size() == want.size());
    double d2 = 0.0, r2 = 0.0;
    for (size_t i = 1024; i + 1024 < got.size(); ++i) {
        d2 += (got[i] - want[i]) * (got[i] - want[i]);
        r2 += want[i] * want[i];
    }
    REQUIRE(r2 > 0.0);
    return std::sqrt(d2 / r2);
}

std::vector<double> lowpass_reference(const std::vector<double>& x, const StftConfig& stft) {
    return synthesize(analyze(x, stft));
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

MixingModel identity_model(int n) {
    MixingModel m;
    m.A = Eigen::MatrixXd::Identity(n, n);
    return m;
}

} // namespace

TEST_CASE("separation config resolves per-algo defaults, explicit values win") {
    SeparationConfig c;
    c.algo = Algo::amp;
    CHECK(c.resolved_theta() == doctest::Approx(0.75));
    CHECK(c.resolved_max_iter() == 30);
    c.algo = Algo::vamp;
    CHECK(c.resolved_theta() == doctest::Approx(0.95));
    CHECK(c.resolved_max_iter() == 10);

    c.theta = 0.6;
    c.max_iter = 44;
    for (Algo a : {Algo::amp, Algo::vamp}) {
        c.algo = a;
        CHECK(c.resolved_theta() == doctest::Approx(0.6));
        CHECK(c.resolved_max_iter() == 44);
    }

    CHECK(c.resolved_block_size() == c.stft.trunc_len);
    c.block_size = c.stft.trunc_len;
    CHECK_NOTHROW(c.validate());

    c.parallel_frames = 3;
    CHECK(c.resolved_parallel() == 3);
    c.parallel_frames = 0;
    CHECK(c.resolved_parallel() >= 1);
}

TEST_CASE("separation config validation rejects bad settings") {
    SeparationConfig c;
    CHECK_NOTHROW(c.validate());

    SeparationConfig bad = c;
    bad.theta = 1.5;
    CHECK_THROWS_AS(bad.validate(), ContractError);
    bad.theta = 1.0;
    CHECK_NOTHROW(bad.validate());
    bad.theta = -0.5; // resolves to the per-algo default
    CHECK_NOTHROW(bad.validate());

    bad = c;
    bad.block_size = 719;
    CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("719"), ContractError);

    bad = c;
    bad.stft.frame_len = 0;
    CHECK_THROWS_AS(bad.validate(), ContractError);

    bad = c;
    bad.prior.rho = 1.5;
    CHECK_THROWS_AS(bad.validate(), ContractError);
}

TEST_CASE("separate rejects mismatched mixture shapes") {
    const MixingModel id2 = identity_model(2);
    SeparationConfig cfg;
    const std::vector<double> ch(4096, 0.1);

    CHECK_THROWS_AS(separate({ch, ch, ch}, id2, cfg), ContractError); // 3 channels, M = 2
    std::vector<double> shorter(4000, 0.1);
    CHECK_THROWS_AS(separate({ch, shorter}, id2, cfg), ContractError);
    std::vector<double> tiny(100, 0.1); // below one frame
    CHECK_THROWS_AS(separate({tiny, tiny}, id2, cfg), ContractError);
}

TEST_CASE("solver hook: oracle passthrough reproduces the analysis low-pass exactly") {
    StftConfig stft;
    const size_t len = 6000;
    const auto src = probe_sources(stft, len);
    const std::vector<std::vector<double>> mix{src[0], src[1]};
    const MixingModel id2 = identity_model(2);
    SeparationConfig cfg;
    cfg.parallel_frames = 1;

    const size_t nframes = 1 + (len - stft.frame_len) / static_cast<size_t>(stft.hop());
    FrameSolver echo = [](const std::vector<double>& y, int frame, FrameDiagnostic& d) {
        d.iterations = 7 + frame;
        d.final_residual = 0.25;
        return y; // identity mixing: the stacked frame already is the solution
    };
    const SeparationResult res = separate_with_solver(mix, id2, cfg, echo);

    CHECK(res.sources.size() == 2);
    CHECK(res.per_frame_diagnostics.size() == nframes);
    CHECK(res.failed_frames() == 0);
    CHECK(res.timing_seconds >= 0.0);
    for (size_t j = 0; j < 2; ++j) {
        CHECK(res.sources[j].size() == len);
        // same frames through the same synthesis path: bitwise identical
        CHECK(max_abs_diff(res.sources[j], lowpass_reference(mix[j], stft)) == 0.0);
    }
    for (size_t f = 0; f < nframes; ++f) {
        CHECK(res.per_frame_diagnostics[f].frame == static_cast<int>(f));
        CHECK(res.per_frame_diagnostics[f].iterations == 7 + static_cast<int>(f));
        CHECK(res.per_frame_diagnostics[f].final_residual == doctest::Approx(0.25));
        CHECK_FALSE(res.per_frame_diagnostics[f].failed);
        CHECK(res.per_frame_diagnostics[f].error.empty());
    }
}

TEST_CASE("solver hook: failing frames are zero-filled and recorded, the rest survive") {
    StftConfig stft;
    const size_t len = 6000;
    const auto src = probe_sources(stft, len);
    const std::vector<std::vector<double>> mix{src[0], src[1]};
    const MixingModel id2 = identity_model(2);
    SeparationConfig cfg;
    cfg.parallel_frames = 1;

    FrameSolver flaky = [](const std::vector<double>& y, int frame, FrameDiagnostic&) {
        if (frame == 2) throw DivergenceError("residual blew up", 5);
        if (frame == 4) throw DegeneracyError("no signal path");
        return y;
    };
    const SeparationResult res = separate_with_solver(mix, id2, cfg, flaky);

    CHECK(res.failed_frames() == 2);
    const auto& d2 = res.per_frame_diagnostics[2];
    CHECK(d2.failed);
    CHECK(d2.iterations == 5);
    CHECK(d2.error.find("blew up") != std::string::npos);
    const auto& d4 = res.per_frame_diagnostics[4];
    CHECK(d4.failed);
    CHECK(d4.error.find("signal path") != std::string::npos);
    for (size_t f = 0; f < res.per_frame_diagnostics.size(); ++f)
        if (f != 2 && f != 4) CHECK_FALSE(res.per_frame_diagnostics[f].failed);

    // expected output: the analysis frames with 2 and 4 zeroed, resynthesized
    for (size_t j = 0; j < 2; ++j) {
        PackedSpectrogram spec = analyze(mix[j], stft);
        std::fill(spec.frames[2].begin(), spec.frames[2].end(), 0.0);
        std::fill(spec.frames[4].begin(), spec.frames[4].end(), 0.0);
        CHECK(max_abs_diff(res.sources[j], synthesize(spec)) == 0.0);
    }
}

TEST_CASE("identity mixing, noiseless config: estimates match the mixtures' low-pass") {
    StftConfig stft;
    const size_t len = 6000;
    const auto src = probe_sources(stft, len);
    const std::vector<std::vector<double>> mix{src[0], src[1]};
    const MixingModel id2 = identity_model(2);
    std::vector<std::vector<double>> lp;
    for (const auto& ch : mix) lp.push_back(lowpass_reference(ch, stft));

    // noiseless operating point: Gaussian prior, 70 dB assumed SNR, fixed noise
    // precision.  The per-coefficient fixed point is the Wiener shrink
    // y * s2*gw / (s2*gw + 1), i.e. a relative floor of 1/(s2*gw) ~ 1e-7.
    SeparationConfig base;
    base.prior.rho = 1.0;
    base.snr_db = 70.0;
    base.em_noise = false;
    base.theta = 1.0;

    SUBCASE("vamp reaches the shrinkage floor") {
        SeparationConfig cfg = base;
        cfg.algo = Algo::vamp;
        cfg.tol = 1e-13;
        cfg.max_iter = 50;
        const SeparationResult res = separate(mix, id2, cfg);
        CHECK(res.failed_frames() == 0);
        for (size_t j = 0; j < 2; ++j)
            CHECK(rel_interior(res.sources[j], lp[j]) <= 1e-6); // measured 1.0e-7
    }

    SUBCASE("amp closes in at its iteration-limited rate") {
        // on an identity operator amp's precision climbs by only 1/sigma2 per
        // step, so the error decays like 1/iter; 100 steps buys ~2e-2
        SeparationConfig cfg = base;
        cfg.algo = Algo::amp;
        cfg.tol = 0.0;
        cfg.max_iter = 100;
        const SeparationResult res = separate(mix, id2, cfg);
        CHECK(res.failed_frames() == 0);
        for (size_t j = 0; j < 2; ++j)
            CHECK(rel_interior(res.sources[j], lp[j]) <= 5e-2); // measured 1.98e-2
    }
}

TEST_CASE("single source, two coherent channels: estimate matches the averaged low-pass") {
    StftConfig stft;
    const size_t len = 6000;
    const auto src = probe_sources(stft, len);
    const std::vector<std::vector<double>> mix{src[2], src[2]};
    MixingModel avg;
    avg.A.resize(2, 1);
    avg.A << 1.0, 1.0;

    // least-squares solution for A = [1;1] is the channel average
    std::vector<double> mean(len);
    for (size_t i = 0; i < len; ++i) mean[i] = 0.5 * (mix[0][i] + mix[1][i]);
    const std::vector<double> oracle = lowpass_reference(mean, stft);

    for (Algo algo : {Algo::amp, Algo::vamp}) {
        SeparationConfig cfg;
        cfg.algo = algo;
        cfg.tol = 1e-13;
        cfg.max_iter = 300;
        const SeparationResult res = separate(mix, avg, cfg);
        CHECK(res.failed_frames() == 0);
        REQUIRE(res.sources.size() == 1);
        const double rel = rel_interior(res.sources[0], oracle);
        if (algo == Algo::amp)
            CHECK(rel <= 2e-2); // measured 5.1e-3 (damped, default prior)
        else
            CHECK(rel <= 1e-5); // measured 3.7e-7
    }
}

TEST_CASE("worker count never changes results, even with per-frame prior EM") {
    StftConfig stft;
    const size_t len = 6000;
    const auto src = probe_sources(stft, len);
    const std::vector<std::vector<double>> mix{src[0], src[1]};
    const MixingModel id2 = identity_model(2);

    for (Algo algo : {Algo::amp, Algo::vamp}) {
        SeparationConfig cfg;
        cfg.algo = algo;
        cfg.tol = 1e-13;
        cfg.max_iter = 30;
        cfg.prior_em.learn_mu = true; // EM state must stay frame-local
        cfg.prior_em.learn_sigma2 = true;

        cfg.parallel_frames = 1;
        const SeparationResult serial = separate(mix, id2, cfg);
        cfg.parallel_frames = 4;
        const SeparationResult threaded = separate(mix, id2, cfg);

        CHECK(serial.failed_frames() == 0);
        for (size_t j = 0; j < 2; ++j)
            CHECK(max_abs_diff(serial.sources[j], threaded.sources[j]) == 0.0);
        REQUIRE(serial.per_frame_diagnostics.size() == threaded.per_frame_diagnostics.size());
        for (size_t f = 0; f < serial.per_frame_diagnostics.size(); ++f) {
            CHECK(serial.per_frame_diagnostics[f].iterations ==
                  threaded.per_frame_diagnostics[f].iterations);
            CHECK(serial.per_frame_diagnostics[f].final_residual ==
                  threaded.per_frame_diagnostics[f].final_residual);
        }
    }
}

TEST_CASE("stereo pair, three sparse sources: both algorithms clear 5 dB median SDR") {
    StftConfig stft;
    const size_t len = 48000;
    const int nframes = 1 + static_cast<int>((len - stft.frame_len) / stft.hop());
    const int T = stft.trunc_len;

    MixingModel model;
    model.A.resize(2, 3);
    for (int j = 0; j < 3; ++j) {
        const double phi = M_PI * (j + 1) / 8.0;
        model.A(0, j) = std::cos(phi);
        model.A(1, j) = std::sin(phi);
    }

    std::mt19937_64 rng(42);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::vector<double>> src;
    for (int j = 0; j < 3; ++j) {
        std::vector<int> support;
        for (int t = 4; t < T; ++t)
            if (u(rng) < 0.05) support.push_back(t);
        PackedSpectrogram spec;
        spec.config = stft;
        spec.original_len = len;
        spec.frames.assign(static_cast<size_t>(nframes),
                           std::vector<double>(static_cast<size_t>(T), 0.0));
        for (auto& fr : spec.frames)
            for (int t : support) fr[static_cast<size_t>(t)] = std::sqrt(5.0) * g(rng);
        src.push_back(synthesize(spec));
    }
    std::vector<std::vector<double>> mix(2, std::vector<double>(len, 0.0));
    for (size_t i = 0; i < len; ++i)
        for (int m = 0; m < 2; ++m)
            for (int j = 0; j < 3; ++j) mix[m][i] += model.A(m, j) * src[j][i];

    for (Algo algo : {Algo::amp, Algo::vamp}) {
        SeparationConfig cfg;
        cfg.algo = algo;
        const SeparationResult res = separate(mix, model, cfg);
        CHECK(res.failed_frames() == 0);
        const MetricReport rep = compute_metrics(res.sources, src);
        std::vector<double> sdr = rep.per_source_sdr;
        std::sort(sdr.begin(), sdr.end());
        INFO((algo == Algo::amp ? "amp" : "vamp"), " sdr: ", sdr[0], " ", sdr[1], " ", sdr[2]);
        CHECK(sdr[1] >= 5.0); // measured 7.35 (amp) / 7.45 (vamp)
        for (double v : sdr) CHECK(std::isfinite(v));
    }
}
