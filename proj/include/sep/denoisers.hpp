#ifndef SEP_DENOISERS_HPP
#define SEP_DENOISERS_HPP

#include <utility>
#include <vector>

#include "sep/errors.hpp"
#include "sep/linops.hpp"

namespace sep {

// Bernoulli-Gaussian prior: x ~ rho * N(mu, sigma2) + (1 - rho) * delta_0.
struct BgPrior {
    double rho = 0.6;
    double mu = 0.0;
    double sigma2 = 5.0;
    void validate() const;
};

struct DenoiserOutput {
    std::vector<double> xhat;  // posterior means
    std::vector<double> dxdr;  // d xhat / d r, componentwise
};

// Scalar denoiser interface consumed by the solvers: r, gamma -> (g1(r), g1'(r)).
class Denoiser {
public:
    virtual ~Denoiser() = default;
    virtual DenoiserOutput denoise(const std::vector<double>& r, double gamma) const = 0;
};

// MMSE (posterior-mean) denoiser under the BG prior with pseudo-noise N(0, 1/gamma).
DenoiserOutput bg_denoise(const BgPrior& prior, const std::vector<double>& r, double gamma);

// Optional EM learning of the active-component parameters. Off by default; the
// noise precision has its own toggle on the solver configs.
struct BgEmToggles {
    bool learn_mu = false;
    bool learn_sigma2 = false;
};

class BgDenoiser final : public Denoiser {
public:
    explicit BgDenoiser(BgPrior p, BgEmToggles t = {}) : prior(p), em(t) { prior.validate(); }
    // With a toggle on, each call also runs one M-step on (mu, sigma2) from the
    // posterior statistics of this batch — the solvers call denoise once per
    // iteration, so learning advances at the iteration cadence.
    DenoiserOutput denoise(const std::vector<double>& r, double gamma) const override;

    mutable BgPrior prior;  // advanced in place when an EM toggle is on
    BgEmToggles em;
};

// (analytic derivative, central finite difference with h = 1e-6 * max(1, |r|)).
std::pair<double, double> bg_denoise_derivative_check(const BgPrior& prior, double r, double gamma);

// EM M-step for the noise precision, clamped to [1e-12, 1e12].
double em_update_noise_precision(const std::vector<double>& y, const BlockOperator& op,
                                 const std::vector<double>& xhat, double tau_p);

// gamma_w from the SNR convention of the table: (Mhat/Nhat) * 10^(snr/10) / (rho*(mu^2+sigma2)).
double init_noise_precision(const BgPrior& prior, int mhat, int nhat, double snr_db);

// Prior-variance precision 1/(rho*(mu^2+sigma2)); the solvers' gamma_0.
double prior_precision(const BgPrior& prior);

inline constexpr double kEmClampLo = 1e-12;
inline constexpr double kEmClampHi = 1e12;

} // namespace sep

#endif
