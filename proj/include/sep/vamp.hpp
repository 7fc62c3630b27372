#ifndef SEP_VAMP_HPP
#define SEP_VAMP_HPP

#include <vector>

#include "sep/amp.hpp"
#include "sep/denoisers.hpp"
#include "sep/errors.hpp"
#include "sep/linops.hpp"

namespace sep {

// gamma_tilde as printed is gamma*(1-alpha)*alpha; the standard derivation gives
// gamma*(1-alpha)/alpha. The LMMSE fixed-point test validates `ratio`, which ships
// as the default; `printed` is retained for study.
enum class GammaTildeForm { printed, ratio };

struct VampConfig {
    double theta = 1.0;
    int max_iter = 10;
    double tol = 1e-6;
    double gamma_w = 1.0;
    double gamma0 = 1.0;
    bool em_noise = false;
    GammaTildeForm gamma_tilde_form = GammaTildeForm::ratio;
    RInit r0_init = RInit::matched_filter;
    void validate() const;
};

struct VampState {
    std::vector<double> xhat;     // x̂_t
    std::vector<double> r;        // r_t
    double gamma = 0.0;           // γ_t
    double alpha = 0.0;           // α_t
    std::vector<double> r_tilde;  // r̃_t
    double gamma_tilde = 0.0;     // γ̃_t
    std::vector<double> d;        // d_t (length R)
    double gamma_w = 0.0;
    bool alpha_clamped = false;
    int iter = 0;
};

struct VampPrecomputed {
    SvdFactors svd;
    std::vector<double> y_tilde;        // Diag(s) U^T y, as printed (length R)
    int R = 0;
    // implementation extras
    std::vector<double> uty;            // U^T y (length R)
    std::vector<double> y_tilde_eff;    // Diag(s)^{-1} U^T y; what line 12 actually needs
    double y_norm2 = 0.0;               // ||y||^2, EM residual bookkeeping
    int nhat = 0;
    int mhat = 0;
};

VampPrecomputed vamp_precompute(const BlockOperator& op, const std::vector<double>& y);
// Reuses an operator-level SVD across frames.
VampPrecomputed vamp_precompute(const SvdFactors& svd, const BlockOperator& op,
                                const std::vector<double>& y);

VampState vamp_init(const VampPrecomputed& pre, const VampConfig& cfg);
VampState vamp_step(const VampState& state, const VampPrecomputed& pre, const Denoiser& denoiser,
                    const VampConfig& cfg);

struct VampResult {
    std::vector<double> xhat;
    SolverDiagnostics diagnostics;
};

VampResult vamp_run(const VampPrecomputed& pre, const Denoiser& denoiser, const VampConfig& cfg);

inline constexpr double kAlphaClampLo = 1e-11;

} // namespace sep

#endif
