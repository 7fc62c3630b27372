#ifndef SEP_AMP_HPP
#define SEP_AMP_HPP

#include <vector>

#include "sep/denoisers.hpp"
#include "sep/errors.hpp"
#include "sep/linops.hpp"

namespace sep {

// The printed gamma update mixes a precision with a variance; the consistent
// variant damps precisions. Both kept, printed is the default.
enum class GammaUpdate { printed, precision_consistent };
enum class RInit { zero, matched_filter };

struct AmpConfig {
    double theta = 1.0;    // damping, (0, 1]
    int max_iter = 30;
    double tol = 1e-6;     // relative-change stop; 0 forces max_iter
    double gamma_w = 1.0;  // noise precision
    double gamma0 = 1.0;   // initial gamma_t (callers usually pass prior_precision)
    bool em_noise = false;
    GammaUpdate gamma_update = GammaUpdate::printed;
    RInit r0_init = RInit::zero;
    void validate() const;
};

struct AmpState {
    std::vector<double> xhat;  // x̂_t
    std::vector<double> s;     // s_t
    std::vector<double> r;     // r_t
    double gamma = 0.0;        // γ_t
    double tau_p = 0.0;        // τ^p_t
    double gamma_w = 0.0;      // current noise precision (EM may move it)
    double resid_norm = 0.0;   // ||y - A x̂_t||, diagnostics
    int iter = 0;
};

struct SolverIterRecord {
    int iter = 0;
    double resid_norm = 0.0;
    double gamma = 0.0;
    double tau_p = 0.0;     // AMP
    double alpha = 0.0;     // VAMP
    double gamma_tilde = 0.0;
    bool alpha_clamped = false;
};

struct SolverDiagnostics {
    std::vector<SolverIterRecord> iters;
    int iterations = 0;
    bool diverged = false;
    int divergence_iter = -1;
    double final_resid_norm = 0.0;
};

// Run-level errors carry what the run had gathered so far.
class SolverDivergenceError : public DivergenceError {
public:
    SolverDivergenceError(const std::string& msg, int iteration, SolverDiagnostics partial)
        : DivergenceError(msg, iteration), diagnostics(std::move(partial)) {}
    SolverDiagnostics diagnostics;
};

class SolverDegeneracyError : public DegeneracyError {
public:
    SolverDegeneracyError(const std::string& msg, SolverDiagnostics partial)
        : DegeneracyError(msg), diagnostics(std::move(partial)) {}
    SolverDiagnostics diagnostics;
};

struct AmpResult {
    std::vector<double> xhat;
    SolverDiagnostics diagnostics;
};

AmpState amp_init(const BlockOperator& op, const std::vector<double>& y, const AmpConfig& cfg);
AmpState amp_step(const AmpState& state, const BlockOperator& op, const std::vector<double>& y,
                  const Denoiser& denoiser, const AmpConfig& cfg);
AmpResult amp_run(const BlockOperator& op, const std::vector<double>& y, const Denoiser& denoiser,
                  const AmpConfig& cfg);

} // namespace sep

#endif
