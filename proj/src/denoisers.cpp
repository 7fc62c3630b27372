#include "sep/denoisers.hpp"

#include <algorithm>
#include <cmath>

namespace sep {

void BgPrior::validate() const {
    if (!(rho >= 0.0 && rho <= 1.0))
        throw ContractError("BgPrior: rho must be in [0,1], got " + std::to_string(rho));
    if (!(sigma2 > 0.0)) throw ContractError("BgPrior: sigma2 must be > 0");
    if (!std::isfinite(mu)) throw ContractError("BgPrior: mu must be finite");
}

namespace {

// Posterior mean m and its activity probability pi for one component.
// Log-domain pi avoids overflow of the two Gaussian likelihood ratios.
inline void bg_scalar_full(const BgPrior& p, double r, double gamma, double& xh, double& dx,
                           double& pi, double& m) {
    if (p.rho <= 0.0) {
        xh = dx = pi = m = 0.0;
        return;
    }
    const double v = 1.0 / gamma;                              // pseudo-noise variance
    const double c = p.sigma2 / (p.sigma2 + v);                // Wiener slope
    m = (p.sigma2 * r + v * p.mu) / (p.sigma2 + v);
    if (p.rho >= 1.0) {
        xh = m;
        dx = c;
        pi = 1.0;
        return;
    }
    const double dr = r - p.mu;
    const double L = std::log(p.rho / (1.0 - p.rho)) - 0.5 * std::log((p.sigma2 + v) / v) -
                     dr * dr / (2.0 * (p.sigma2 + v)) + r * r / (2.0 * v);
    pi = 1.0 / (1.0 + std::exp(-L));                           // sigmoid; saturates cleanly
    xh = pi * m;
    // d xhat / dr = gamma * Var(x | r) = pi*c + pi*(1-pi)*gamma*m^2
    dx = pi * c + pi * (1.0 - pi) * gamma * m * m;
}

inline void bg_scalar(const BgPrior& p, double r, double gamma, double& xh, double& dx) {
    double pi, m;
    bg_scalar_full(p, r, gamma, xh, dx, pi, m);
}

} // namespace

DenoiserOutput bg_denoise(const BgPrior& prior, const std::vector<double>& r, double gamma) {
    prior.validate();
    if (!(gamma > 0.0)) throw ContractError("bg_denoise: gamma must be > 0, got " + std::to_string(gamma));
    DenoiserOutput out;
    out.xhat.resize(r.size());
    out.dxdr.resize(r.size());
    for (size_t i = 0; i < r.size(); ++i) bg_scalar(prior, r[i], gamma, out.xhat[i], out.dxdr[i]);
    return out;
}

DenoiserOutput BgDenoiser::denoise(const std::vector<double>& r, double gamma) const {
    if (!em.learn_mu && !em.learn_sigma2) return bg_denoise(prior, r, gamma);
    prior.validate();
    if (!(gamma > 0.0))
        throw ContractError("bg_denoise: gamma must be > 0, got " + std::to_string(gamma));
    DenoiserOutput out;
    out.xhat.resize(r.size());
    out.dxdr.resize(r.size());
    double pi_sum = 0.0, pim_sum = 0.0, pim2_sum = 0.0;
    const double v = 1.0 / gamma;
    const double v_post = prior.sigma2 * v / (prior.sigma2 + v);  // active-component variance
    for (size_t i = 0; i < r.size(); ++i) {
        double pi, m;
        bg_scalar_full(prior, r[i], gamma, out.xhat[i], out.dxdr[i], pi, m);
        pi_sum += pi;
        pim_sum += pi * m;
        pim2_sum += pi * m * m;
    }
    // M-step on the active component; skip when no mass is assigned to it
    if (pi_sum > 1e-12) {
        const double mu_new = em.learn_mu ? pim_sum / pi_sum : prior.mu;
        if (em.learn_sigma2) {
            const double second = pim2_sum / pi_sum + v_post;
            prior.sigma2 = std::max(second - 2.0 * mu_new * pim_sum / pi_sum + mu_new * mu_new,
                                    1e-12);
        }
        prior.mu = mu_new;
    }
    return out;
}

std::pair<double, double> bg_denoise_derivative_check(const BgPrior& prior, double r, double gamma) {
    double xh, dx, xp, dp, xm, dm;
    bg_scalar(prior, r, gamma, xh, dx);
    const double h = 1e-6 * std::max(1.0, std::abs(r));
    bg_scalar(prior, r + h, gamma, xp, dp);
    bg_scalar(prior, r - h, gamma, xm, dm);
    return {dx, (xp - xm) / (2.0 * h)};
}

double em_update_noise_precision(const std::vector<double>& y, const BlockOperator& op,
                                 const std::vector<double>& xhat, double tau_p) {
    if (y.empty()) throw ContractError("em_update_noise_precision: empty observation vector");
    if (!(tau_p >= 0.0)) throw ContractError("em_update_noise_precision: tau_p must be >= 0");
    const std::vector<double> yh = apply_forward(op, xhat);
    double r2 = 0.0;
    for (size_t i = 0; i < y.size(); ++i) {
        const double d = y[i] - yh[i];
        r2 += d * d;
    }
    const double mh = static_cast<double>(y.size());
    const double g = mh / (r2 + mh * tau_p);
    return std::clamp(g, kEmClampLo, kEmClampHi);
}

double init_noise_precision(const BgPrior& prior, int mhat, int nhat, double snr_db) {
    prior.validate();
    if (prior.rho <= 0.0) throw ContractError("init_noise_precision: rho must be > 0");
    const double second_moment = prior.mu * prior.mu + prior.sigma2;
    if (!(second_moment > 0.0)) throw ContractError("init_noise_precision: mu^2 + sigma2 must be > 0");
    return (static_cast<double>(mhat) / nhat) * std::pow(10.0, snr_db / 10.0) /
           (prior.rho * second_moment);
}

double prior_precision(const BgPrior& prior) {
    prior.validate();
    if (prior.rho <= 0.0) throw ContractError("prior_precision: rho must be > 0");
    return 1.0 / (prior.rho * (prior.mu * prior.mu + prior.sigma2));
}

} // namespace sep
