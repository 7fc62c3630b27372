#ifndef SEP_PIPELINE_HPP
#define SEP_PIPELINE_HPP

#include <functional>
#include <string>
#include <vector>

#include "sep/amp.hpp"
#include "sep/denoisers.hpp"
#include "sep/linops.hpp"
#include "sep/stft.hpp"
#include "sep/vamp.hpp"

namespace sep {

enum class Algo { amp, vamp };

struct SeparationConfig {
    Algo algo = Algo::amp;
    StftConfig stft;
    BgPrior prior;
    BgEmToggles prior_em;      // per-frame (mu, sigma2) learning; off by default
    double theta = -1.0;       // <= 0 resolves to 0.75 (amp) / 0.95 (vamp)
    int max_iter = -1;         // <= 0 resolves to 30 (amp) / 10 (vamp)
    double tol = 1e-6;
    bool em_noise = true;      // noise-precision learning on, BG parameters fixed
    GammaUpdate gamma_update = GammaUpdate::printed;
    GammaTildeForm gamma_tilde_form = GammaTildeForm::ratio;
    int block_size = -1;       // <= 0 resolves to trunc_len; only T = trunc_len is supported
    double snr_db = 40.0;
    int parallel_frames = 0;   // <= 0 resolves to hardware concurrency (capped at 8)

    double resolved_theta() const;
    int resolved_max_iter() const;
    int resolved_block_size() const;
    int resolved_parallel() const;
    void validate() const;
};

struct FrameDiagnostic {
    int frame = 0;
    int iterations = 0;
    double final_residual = 0.0;
    bool failed = false;
    std::string error;
};

struct SeparationResult {
    std::vector<std::vector<double>> sources;  // N time-domain estimates, mixture length each
    std::vector<FrameDiagnostic> per_frame_diagnostics;
    double timing_seconds = 0.0;
    size_t failed_frames() const;
};

SeparationResult separate(const std::vector<std::vector<double>>& mixtures,
                          const MixingModel& model, const SeparationConfig& cfg);

// Test hook: replace the solver with any frame oracle (y, frame index) -> xhat.
using FrameSolver =
    std::function<std::vector<double>(const std::vector<double>&, int, FrameDiagnostic&)>;
SeparationResult separate_with_solver(const std::vector<std::vector<double>>& mixtures,
                                      const MixingModel& model, const SeparationConfig& cfg,
                                      const FrameSolver& solver);

} // namespace sep

#endif
