#include "sep/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

namespace sep {

// per-algo audio operating points; damping matters on coherent stereo columns
double SeparationConfig::resolved_theta() const {
    if (theta > 0.0) return theta;
    return algo == Algo::amp ? 0.75 : 0.95;
}

int SeparationConfig::resolved_max_iter() const {
    if (max_iter > 0) return max_iter;
    return algo == Algo::amp ? 30 : 10;
}

int SeparationConfig::resolved_block_size() const {
    return block_size > 0 ? block_size : stft.trunc_len;
}

int SeparationConfig::resolved_parallel() const {
    if (parallel_frames > 0) return parallel_frames;
    const unsigned hw = std::thread::hardware_concurrency();
    return static_cast<int>(hw == 0 ? 1 : std::min(hw, 8u));
}

void SeparationConfig::validate() const {
    stft.validate();
    prior.validate();
    if (theta > 0.0 && !(theta <= 1.0))
        throw ContractError("SeparationConfig: theta must be in (0,1]");
    if (resolved_block_size() != stft.trunc_len)
        throw ContractError("SeparationConfig: only block_size == trunc_len is supported (got " +
                            std::to_string(resolved_block_size()) + " vs trunc_len " +
                            std::to_string(stft.trunc_len) + ")");
}

size_t SeparationResult::failed_frames() const {
    size_t n = 0;
    for (const auto& d : per_frame_diagnostics)
        if (d.failed) ++n;
    return n;
}

SeparationResult separate_with_solver(const std::vector<std::vector<double>>& mixtures,
                                      const MixingModel& model, const SeparationConfig& cfg,
                                      const FrameSolver& solver) {
    cfg.validate();
    model.validate();
    const auto t0 = std::chrono::steady_clock::now();

    const int M = model.rows();
    const int N = model.cols();
    if (static_cast<int>(mixtures.size()) != M)
        throw ContractError("separate: " + std::to_string(mixtures.size()) +
                            " mixture channels, matrix expects " + std::to_string(M));
    const size_t len = mixtures.front().size();
    for (const auto& ch : mixtures)
        if (ch.size() != len) throw ContractError("separate: mixture channel length mismatch");

    // analysis
    std::vector<PackedSpectrogram> specs;
    specs.reserve(mixtures.size());
    for (const auto& ch : mixtures) specs.push_back(analyze(ch, cfg.stft));
    const size_t nframes = specs.front().num_frames();
    const int T = cfg.resolved_block_size();

    // per-frame independent solves, channel-major / coefficient-minor stacking
    std::vector<std::vector<double>> solutions(nframes);
    std::vector<FrameDiagnostic> diags(nframes);
    std::atomic<size_t> next_frame{0};
    auto work = [&]() {
        for (;;) {
            const size_t f = next_frame.fetch_add(1);
            if (f >= nframes) return;
            std::vector<double> y(static_cast<size_t>(M) * T);
            for (int i = 0; i < M; ++i)
                for (int t = 0; t < T; ++t)
                    y[static_cast<size_t>(i) * T + t] = specs[i].frames[f][t];
            FrameDiagnostic d;
            d.frame = static_cast<int>(f);
            try {
                solutions[f] = solver(y, static_cast<int>(f), d);
            } catch (const DivergenceError& e) {
                d.failed = true;
                d.error = e.what();
                d.iterations = e.iter;
                solutions[f].assign(static_cast<size_t>(N) * T, 0.0);
            } catch (const DegeneracyError& e) {
                d.failed = true;
                d.error = e.what();
                solutions[f].assign(static_cast<size_t>(N) * T, 0.0);
            }
            diags[f] = std::move(d);
        }
    };
    const int workers = std::max(1, std::min<int>(cfg.resolved_parallel(),
                                                  static_cast<int>(nframes)));
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<size_t>(workers));
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }

    // scatter into per-source spectrograms and resynthesize
    SeparationResult res;
    res.per_frame_diagnostics = std::move(diags);
    res.sources.resize(static_cast<size_t>(N));
    for (int j = 0; j < N; ++j) {
        PackedSpectrogram sj;
        sj.config = cfg.stft;
        sj.original_len = len;
        sj.frames.resize(nframes);
        for (size_t f = 0; f < nframes; ++f) {
            sj.frames[f].resize(static_cast<size_t>(T));
            for (int t = 0; t < T; ++t)
                sj.frames[f][t] = solutions[f][static_cast<size_t>(j) * T + t];
        }
        res.sources[static_cast<size_t>(j)] = synthesize(sj);
    }

    res.timing_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

SeparationResult separate(const std::vector<std::vector<double>>& mixtures,
                          const MixingModel& model, const SeparationConfig& cfg) {
    cfg.validate();
    const int T = cfg.resolved_block_size();
    MixingModel m = model;
    m.gamma_w = init_noise_precision(cfg.prior, model.rows() * T, model.cols() * T, cfg.snr_db);
    const BlockOperator op(m, T);
    const double g0 = prior_precision(cfg.prior);

    // operator-level SVD shared by all frames (VAMP only)
    SvdFactors svd;
    if (cfg.algo == Algo::vamp) svd = economy_svd(op);

    FrameSolver solver = [&, T](const std::vector<double>& y, int /*frame*/, FrameDiagnostic& d) {
        // fresh per frame: with EM toggles on, the prior drifts while the frame runs,
        // and that state must not leak across frames (or across worker threads)
        const BgDenoiser denoiser(cfg.prior, cfg.prior_em);
        if (cfg.algo == Algo::amp) {
            AmpConfig ac;
            ac.theta = cfg.resolved_theta();
            ac.max_iter = cfg.resolved_max_iter();
            ac.tol = cfg.tol;
            ac.gamma_w = m.gamma_w;
            ac.gamma0 = g0;
            ac.em_noise = cfg.em_noise;
            ac.gamma_update = cfg.gamma_update;
            AmpResult r = amp_run(op, y, denoiser, ac);
            d.iterations = r.diagnostics.iterations;
            d.final_residual = r.diagnostics.final_resid_norm;
            return r.xhat;
        }
        VampConfig vc;
        vc.theta = cfg.resolved_theta();
        vc.max_iter = cfg.resolved_max_iter();
        vc.tol = cfg.tol;
        vc.gamma_w = m.gamma_w;
        vc.gamma0 = g0;
        vc.em_noise = cfg.em_noise;
        vc.gamma_tilde_form = cfg.gamma_tilde_form;
        const VampPrecomputed pre = vamp_precompute(svd, op, y);
        VampResult r = vamp_run(pre, denoiser, vc);
        d.iterations = r.diagnostics.iterations;
        const std::vector<double> yh = apply_forward(op, r.xhat);
        double r2 = 0.0;
        for (size_t i = 0; i < y.size(); ++i) r2 += (y[i] - yh[i]) * (y[i] - yh[i]);
        d.final_residual = std::sqrt(r2);
        return r.xhat;
    };
    return separate_with_solver(mixtures, model, cfg, solver);
}

} // namespace sep
