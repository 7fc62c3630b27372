#include "sep/amp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sep {

namespace {

bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

} // namespace

void AmpConfig::validate() const {
    if (!(theta > 0.0 && theta <= 1.0))
        throw ContractError("AmpConfig: theta must be in (0,1], got " + std::to_string(theta));
    if (max_iter < 1) throw ContractError("AmpConfig: max_iter must be >= 1");
    if (!(tol >= 0.0)) throw ContractError("AmpConfig: tol must be >= 0");
    if (!(gamma_w > 0.0)) throw ContractError("AmpConfig: gamma_w must be > 0");
    if (!(gamma0 > 0.0)) throw ContractError("AmpConfig: gamma0 must be > 0");
}

AmpState amp_init(const BlockOperator& op, const std::vector<double>& y, const AmpConfig& cfg) {
    cfg.validate();
    if (static_cast<int>(y.size()) != op.mhat())
        throw ContractError("amp_init: y has length " + std::to_string(y.size()) +
                            ", operator expects " + std::to_string(op.mhat()));
    AmpState st;
    st.xhat.assign(static_cast<size_t>(op.nhat()), 0.0);
    st.s.assign(static_cast<size_t>(op.mhat()), 0.0);
    if (cfg.r0_init == RInit::matched_filter) {
        st.r = apply_adjoint(op, y);
        const double scale = static_cast<double>(op.nhat()) / op.frob_sq();
        for (double& v : st.r) v *= scale;
    } else {
        st.r.assign(static_cast<size_t>(op.nhat()), 0.0);
    }
    st.gamma = cfg.gamma0;
    st.tau_p = 0.0;
    st.gamma_w = cfg.gamma_w;
    st.iter = 0;
    return st;
}

AmpState amp_step(const AmpState& state, const BlockOperator& op, const std::vector<double>& y,
                  const Denoiser& denoiser, const AmpConfig& cfg) {
    const double th = cfg.theta;
    const size_t nh = state.xhat.size(), mh = state.s.size();
    AmpState next = state;

    const DenoiserOutput g = denoiser.denoise(state.r, state.gamma);

    // line 3: xhat_t = theta*g1 + (1-theta)*xhat_{t-1}
    for (size_t i = 0; i < nh; ++i) next.xhat[i] = th * g.xhat[i] + (1.0 - th) * state.xhat[i];

    // line 4: tau_p = (N/M) * gamma^{-1} * <g1'>
    double mean_d = 0.0;
    for (double d : g.dxdr) mean_d += d;
    mean_d /= static_cast<double>(nh);
    next.tau_p = (static_cast<double>(nh) / mh) * (1.0 / state.gamma) * mean_d;

    // line 5: s_t = theta*(gamma_w^{-1}+tau_p)^{-1}(y - A xhat + tau_p s_{t-1}) + (1-theta)s_{t-1}
    const std::vector<double> ax = apply_forward(op, next.xhat);
    const double scale5 = 1.0 / (1.0 / state.gamma_w + next.tau_p);
    double r2 = 0.0;
    for (size_t i = 0; i < mh; ++i) {
        const double resid = y[i] - ax[i];
        r2 += resid * resid;
        next.s[i] = th * scale5 * (resid + next.tau_p * state.s[i]) + (1.0 - th) * state.s[i];
    }
    next.resid_norm = std::sqrt(r2);

    if (cfg.em_noise) {
        const double mhd = static_cast<double>(mh);
        next.gamma_w = std::clamp(mhd / (r2 + mhd * next.tau_p), kEmClampLo, kEmClampHi);
    } else {
        next.gamma_w = state.gamma_w;
    }

    // line 6, with the freshest gamma_w
    const double scale6 = 1.0 / (1.0 / next.gamma_w + next.tau_p);
    if (cfg.gamma_update == GammaUpdate::printed)
        next.gamma = th * scale6 + (1.0 - th) * (1.0 / state.gamma);
    else
        next.gamma = th * scale6 + (1.0 - th) * state.gamma;

    // line 7: r_{t+1} = xhat_t + gamma_{t+1}^{-1} A^T s_t
    const std::vector<double> ats = apply_adjoint(op, next.s);
    for (size_t i = 0; i < nh; ++i) next.r[i] = next.xhat[i] + (1.0 / next.gamma) * ats[i];

    next.iter = state.iter + 1;

    if (!all_finite(next.xhat) || !all_finite(next.s) || !all_finite(next.r) ||
        !std::isfinite(next.gamma) || !std::isfinite(next.tau_p))
        throw DivergenceError("amp_step: non-finite state at iteration " + std::to_string(next.iter),
                              next.iter);
    return next;
}

AmpResult amp_run(const BlockOperator& op, const std::vector<double>& y, const Denoiser& denoiser,
                  const AmpConfig& cfg) {
    AmpState st = amp_init(op, y, cfg);
    SolverDiagnostics diag;
    double resid0 = -1.0;
    std::vector<double> prev = st.xhat;
    try {
        for (int t = 0; t < cfg.max_iter; ++t) {
            st = amp_step(st, op, y, denoiser, cfg);
            diag.iters.push_back({st.iter, st.resid_norm, st.gamma, st.tau_p, 0.0, 0.0, false});
            if (resid0 < 0.0) resid0 = st.resid_norm;
            if (resid0 > 0.0 && st.resid_norm > 1e6 * resid0)
                throw DivergenceError("amp_run: residual grew beyond 1e6x initial at iteration " +
                                          std::to_string(st.iter),
                                      st.iter);
            double dn = 0.0, xn = 0.0;
            for (size_t i = 0; i < st.xhat.size(); ++i) {
                const double d = st.xhat[i] - prev[i];
                dn += d * d;
                xn += st.xhat[i] * st.xhat[i];
            }
            prev = st.xhat;
            const double rel = std::sqrt(dn) / std::max(std::sqrt(xn), 1e-30);
            // x̂_1 can coincide with the zero init (zero-mean prior); only trust
            // the stop once the extrinsic has fed back at least once.
            if (t >= 1 && rel < cfg.tol) break;
        }
    } catch (const DivergenceError& e) {
        diag.diverged = true;
        diag.divergence_iter = e.iter;
        diag.iterations = static_cast<int>(diag.iters.size());
        diag.final_resid_norm = diag.iters.empty() ? 0.0 : diag.iters.back().resid_norm;
        throw SolverDivergenceError(e.what(), e.iter, diag);
    }
    diag.iterations = st.iter;
    diag.final_resid_norm = st.resid_norm;
    return {st.xhat, diag};
}

} // namespace sep
