#include "sep/stft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <string>

namespace sep {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kWindowSumEps = 1e-8;

// FFTW plan creation is not thread-safe; execution on distinct buffers is.
std::mutex& plan_mutex() {
    static std::mutex m;
    return m;
}

struct FftBuffers {
    int L;
    double* real;
    fftw_complex* cplx;
    fftw_plan fwd;
    fftw_plan inv;

    explicit FftBuffers(int len) : L(len) {
        real = fftw_alloc_real(static_cast<size_t>(L));
        cplx = fftw_alloc_complex(static_cast<size_t>(L / 2 + 1));
        std::lock_guard<std::mutex> lock(plan_mutex());
        fwd = fftw_plan_dft_r2c_1d(L, real, cplx, FFTW_ESTIMATE);
        inv = fftw_plan_dft_c2r_1d(L, cplx, real, FFTW_ESTIMATE);
    }
    ~FftBuffers() {
        std::lock_guard<std::mutex> lock(plan_mutex());
        fftw_destroy_plan(fwd);
        fftw_destroy_plan(inv);
        fftw_free(real);
        fftw_free(cplx);
    }
    FftBuffers(const FftBuffers&) = delete;
    FftBuffers& operator=(const FftBuffers&) = delete;
};

} // namespace

void StftConfig::validate() const {
    if (frame_len < 8 || frame_len % 2 != 0)
        throw ContractError("StftConfig: frame_len must be even and >= 8, got " +
                            std::to_string(frame_len));
    if (!(overlap >= 0.0 && overlap < 1.0))
        throw ContractError("StftConfig: overlap must be in [0,1), got " + std::to_string(overlap));
    if (trunc_len < 1 || trunc_len > frame_len)
        throw ContractError("StftConfig: trunc_len must be in [1, frame_len], got " +
                            std::to_string(trunc_len));
}

int StftConfig::hop() const {
    const int h = static_cast<int>(std::llround((1.0 - overlap) * frame_len));
    return h < 1 ? 1 : h;
}

std::vector<double> hann_periodic(int len) {
    std::vector<double> w(static_cast<size_t>(len));
    for (int n = 0; n < len; ++n) w[n] = 0.5 - 0.5 * std::cos(2.0 * kPi * n / len);
    return w;
}

// Parseval scaling: sum of packed squares equals windowed-frame energy.
// DC and Nyquist carry sqrt(1/L); paired bins carry sqrt(2/L).
std::vector<double> pack_spectrum(const std::vector<std::complex<double>>& bins,
                                  const StftConfig& cfg) {
    cfg.validate();
    const int L = cfg.frame_len;
    if (static_cast<int>(bins.size()) != cfg.num_bins())
        throw ContractError("pack_spectrum: expected " + std::to_string(cfg.num_bins()) +
                            " bins, got " + std::to_string(bins.size()));
    const double w1 = std::sqrt(1.0 / L);
    const double w2 = std::sqrt(2.0 / L);
    std::vector<double> full(static_cast<size_t>(L));
    full[0] = w1 * bins[0].real();
    full[1] = w1 * bins[static_cast<size_t>(L / 2)].real();
    for (int k = 1; k <= L / 2 - 1; ++k) {
        full[static_cast<size_t>(2 * k)] = w2 * bins[static_cast<size_t>(k)].real();
        full[static_cast<size_t>(2 * k + 1)] = w2 * bins[static_cast<size_t>(k)].imag();
    }
    full.resize(static_cast<size_t>(cfg.trunc_len));
    return full;
}

std::vector<std::complex<double>> unpack_spectrum(const std::vector<double>& packed,
                                                  const StftConfig& cfg) {
    cfg.validate();
    const int L = cfg.frame_len;
    if (static_cast<int>(packed.size()) > L)
        throw ContractError("unpack_spectrum: packed frame longer than frame_len");
    std::vector<double> full(static_cast<size_t>(L), 0.0);
    std::copy(packed.begin(), packed.end(), full.begin());
    const double w1 = std::sqrt(1.0 / L);
    const double w2 = std::sqrt(2.0 / L);
    std::vector<std::complex<double>> bins(static_cast<size_t>(cfg.num_bins()), {0.0, 0.0});
    bins[0] = {full[0] / w1, 0.0};
    bins[static_cast<size_t>(L / 2)] = {full[1] / w1, 0.0};
    for (int k = 1; k <= L / 2 - 1; ++k)
        bins[static_cast<size_t>(k)] = {full[static_cast<size_t>(2 * k)] / w2,
                                        full[static_cast<size_t>(2 * k + 1)] / w2};
    return bins;
}

PackedSpectrogram analyze(const std::vector<double>& signal, const StftConfig& cfg) {
    cfg.validate();
    const int L = cfg.frame_len;
    if (static_cast<int>(signal.size()) < L)
        throw ContractError("analyze: signal length " + std::to_string(signal.size()) +
                            " shorter than one frame (" + std::to_string(L) + ")");
    const int hop = cfg.hop();
    const size_t nframes = 1 + (signal.size() - static_cast<size_t>(L)) / hop;
    const std::vector<double> win = hann_periodic(L);

    PackedSpectrogram out;
    out.config = cfg;
    out.original_len = signal.size();
    out.frames.resize(nframes);

    FftBuffers fft(L);
    std::vector<std::complex<double>> bins(static_cast<size_t>(cfg.num_bins()));
    for (size_t f = 0; f < nframes; ++f) {
        const size_t off = f * hop;
        for (int n = 0; n < L; ++n) fft.real[n] = signal[off + n] * win[n];
        fftw_execute(fft.fwd);
        for (int b = 0; b < cfg.num_bins(); ++b) bins[b] = {fft.cplx[b][0], fft.cplx[b][1]};
        out.frames[f] = pack_spectrum(bins, cfg);
    }
    return out;
}

std::vector<double> synthesize(const PackedSpectrogram& spec) {
    const StftConfig& cfg = spec.config;
    cfg.validate();
    const int L = cfg.frame_len;
    const int hop = cfg.hop();
    const std::vector<double> win = hann_periodic(L);

    const size_t span =
        spec.frames.empty() ? 0 : (spec.frames.size() - 1) * hop + static_cast<size_t>(L);
    std::vector<double> acc(span, 0.0);
    std::vector<double> wsum(span, 0.0);

    FftBuffers fft(L);
    for (size_t f = 0; f < spec.frames.size(); ++f) {
        const std::vector<std::complex<double>> bins = unpack_spectrum(spec.frames[f], cfg);
        for (int b = 0; b < cfg.num_bins(); ++b) {
            fft.cplx[b][0] = bins[b].real();
            fft.cplx[b][1] = bins[b].imag();
        }
        fftw_execute(fft.inv);  // unnormalized: scales by L
        const size_t off = f * hop;
        for (int n = 0; n < L; ++n) {
            acc[off + n] += (fft.real[n] / L) * win[n];
            wsum[off + n] += win[n] * win[n];
        }
    }

    std::vector<double> out(spec.original_len, 0.0);
    const size_t lim = std::min(out.size(), span);
    for (size_t i = 0; i < lim; ++i) out[i] = wsum[i] >= kWindowSumEps ? acc[i] / wsum[i] : 0.0;
    return out;
}

} // namespace sep
