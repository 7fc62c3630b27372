#include "sep/vamp.hpp"

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

} // namespace

void VampConfig::validate() const {
    if (!(theta > 0.0 && theta <= 1.0))
        throw ContractError("VampConfig: theta must be in (0,1], got " + std::to_string(theta));
    if (max_iter < 1) throw ContractError("VampConfig: max_iter must be >= 1");
    if (!(tol >= 0.0)) throw ContractError("VampConfig: tol must be >= 0");
    if (!(gamma_w > 0.0)) throw ContractError("VampConfig: gamma_w must be > 0");
    if (!(gamma0 > 0.0)) throw ContractError("VampConfig: gamma0 must be > 0");
}

VampPrecomputed vamp_precompute(const BlockOperator& op, const std::vector<double>& y) {
    return vamp_precompute(economy_svd(op), op, y);
}

VampPrecomputed vamp_precompute(const SvdFactors& svd, const BlockOperator& op,
                                const std::vector<double>& y) {
    if (static_cast<int>(y.size()) != op.mhat())
        throw ContractError("vamp_precompute: y has length " + std::to_string(y.size()) +
                            ", operator expects " + std::to_string(op.mhat()));
    if (svd.R == 0) throw DegeneracyError("vamp_precompute: operator has rank 0, no signal path");
    VampPrecomputed pre;
    pre.svd = svd;
    pre.R = svd.R;
    pre.nhat = op.nhat();
    pre.mhat = op.mhat();
    pre.uty = svd.apply_Ut(y);
    pre.y_tilde.resize(pre.uty.size());
    pre.y_tilde_eff.resize(pre.uty.size());
    const int T = svd.T;
    for (int k = 0; k < pre.R; ++k) {
        const double sk = svd.s0(k / T);
        pre.y_tilde[k] = sk * pre.uty[k];
        pre.y_tilde_eff[k] = pre.uty[k] / sk;
    }
    pre.y_norm2 = 0.0;
    for (double v : y) pre.y_norm2 += v * v;
    return pre;
}

VampState vamp_init(const VampPrecomputed& pre, const VampConfig& cfg) {
    cfg.validate();
    VampState st;
    st.xhat.assign(static_cast<size_t>(pre.nhat), 0.0);
    if (cfg.r0_init == RInit::matched_filter) {
        // A^T y = V Diag(s) U^T y
        std::vector<double> z(pre.uty.size());
        for (int k = 0; k < pre.R; ++k) z[k] = pre.y_tilde[k];
        st.r = pre.svd.apply_V(z);
    } else {
        st.r.assign(static_cast<size_t>(pre.nhat), 0.0);
    }
    st.gamma = cfg.gamma0;
    st.gamma_w = cfg.gamma_w;
    st.iter = 0;
    return st;
}

VampState vamp_step(const VampState& state, const VampPrecomputed& pre, const Denoiser& denoiser,
                    const VampConfig& cfg) {
    const double th = cfg.theta;
    const size_t nh = state.xhat.size();
    const int R = pre.R;
    const int T = pre.svd.T;
    VampState next = state;

    const DenoiserOutput g = denoiser.denoise(state.r, state.gamma);

    // line 6
    for (size_t i = 0; i < nh; ++i) next.xhat[i] = th * g.xhat[i] + (1.0 - th) * state.xhat[i];

    // line 7, clamped before the line-8 division
    double alpha = 0.0;
    for (double d : g.dxdr) alpha += d;
    alpha /= static_cast<double>(nh);
    if (!std::isfinite(alpha))
        throw DegeneracyError("vamp_step: <g1'> is not finite at iteration " +
                              std::to_string(state.iter + 1));
    next.alpha_clamped = (alpha < kAlphaClampLo || alpha > 1.0 - kAlphaClampLo);
    alpha = std::clamp(alpha, kAlphaClampLo, 1.0 - kAlphaClampLo);
    next.alpha = alpha;

    // line 8
    next.r_tilde.resize(nh);
    for (size_t i = 0; i < nh; ++i)
        next.r_tilde[i] = (next.xhat[i] - alpha * state.r[i]) / (1.0 - alpha);

    // line 9
    next.gamma_tilde = (cfg.gamma_tilde_form == GammaTildeForm::printed)
                           ? state.gamma * (1.0 - alpha) * alpha
                           : state.gamma * (1.0 - alpha) / alpha;

    // line 10
    next.d.resize(static_cast<size_t>(R));
    double dbar = 0.0;
    for (int k = 0; k < R; ++k) {
        const double s2 = pre.svd.s0(k / T) * pre.svd.s0(k / T);
        next.d[k] = state.gamma_w * s2 / (state.gamma_w * s2 + next.gamma_tilde);
        dbar += next.d[k];
    }
    dbar /= R;

    if (cfg.em_noise) {
        // residual in the SVD basis: ||y - A xhat||^2 splits into the range part
        // ||U^T y - Diag(s) V^T xhat||^2 plus the off-range energy of y.
        const std::vector<double> vtx = pre.svd.apply_Vt(next.xhat);
        double res2 = 0.0, uty2 = 0.0;
        for (int k = 0; k < R; ++k) {
            const double e = pre.uty[k] - pre.svd.s0(k / T) * vtx[k];
            res2 += e * e;
            uty2 += pre.uty[k] * pre.uty[k];
        }
        res2 += std::max(0.0, pre.y_norm2 - uty2);
        const double mh = static_cast<double>(pre.mhat);
        const double tau = alpha / state.gamma;
        next.gamma_w = std::clamp(mh / (res2 + mh * tau), kEmClampLo, kEmClampHi);
    } else {
        next.gamma_w = state.gamma_w;
    }

    // line 11
    const double nhd = static_cast<double>(pre.nhat);
    const double denom = nhd - R * dbar;
    if (std::abs(denom) < 1e-12 * nhd)
        throw DegeneracyError("vamp_step: N - R<d> vanished at iteration " +
                              std::to_string(state.iter + 1));
    next.gamma = th * next.gamma_tilde * R * dbar / denom + (1.0 - th) * state.gamma;
    if (!(next.gamma > 0.0) || !std::isfinite(next.gamma))
        throw DivergenceError("vamp_step: gamma left (0,inf) at iteration " +
                                  std::to_string(state.iter + 1),
                              state.iter + 1);

    // line 12. The printed y_tilde = Diag(s) U^T y feeds (y_tilde - V^T r_tilde), but the
    // LMMSE stage it summarizes works on Diag(s)^{-1} U^T y; using the printed vector sends
    // the iteration to the wrong fixed point, so the descaled form is applied here.
    const std::vector<double> vtr = pre.svd.apply_Vt(next.r_tilde);
    std::vector<double> z(static_cast<size_t>(R));
    const double nr = nhd / R;
    for (int k = 0; k < R; ++k) z[k] = (next.d[k] / dbar) * (pre.y_tilde_eff[k] - vtr[k]);
    const std::vector<double> vz = pre.svd.apply_V(z);
    next.r.resize(nh);
    for (size_t i = 0; i < nh; ++i) next.r[i] = next.r_tilde[i] + nr * vz[i];

    next.iter = state.iter + 1;

    if (!all_finite(next.xhat) || !all_finite(next.r) || !all_finite(next.r_tilde))
        throw DivergenceError("vamp_step: non-finite state at iteration " + std::to_string(next.iter),
                              next.iter);
    return next;
}

VampResult vamp_run(const VampPrecomputed& pre, const Denoiser& denoiser, const VampConfig& cfg) {
    VampState st = vamp_init(pre, cfg);
    SolverDiagnostics diag;
    std::vector<double> prev = st.xhat;
    try {
        for (int t = 0; t < cfg.max_iter; ++t) {
            st = vamp_step(st, pre, denoiser, cfg);
            diag.iters.push_back(
                {st.iter, 0.0, st.gamma, 0.0, st.alpha, st.gamma_tilde, st.alpha_clamped});
            double dn = 0.0, xn = 0.0;
            for (size_t i = 0; i < st.xhat.size(); ++i) {
                const double d = st.xhat[i] - prev[i];
                dn += d * d;
                xn += st.xhat[i] * st.xhat[i];
            }
            prev = st.xhat;
            const double rel = std::sqrt(dn) / std::max(std::sqrt(xn), 1e-30);
            // see amp_run: ignore a first-iteration coincidence with the init
            if (t >= 1 && rel < cfg.tol) break;
        }
    } catch (const DivergenceError& e) {
        diag.diverged = true;
        diag.divergence_iter = e.iter;
        diag.iterations = static_cast<int>(diag.iters.size());
        throw SolverDivergenceError(e.what(), e.iter, diag);
    } catch (const DegeneracyError& e) {
        diag.diverged = true;
        diag.iterations = static_cast<int>(diag.iters.size());
        throw SolverDegeneracyError(e.what(), diag);
    }
    diag.iterations = st.iter;
    return {st.xhat, diag};
}

} // namespace sep
