#ifndef SEP_STFT_HPP
#define SEP_STFT_HPP

#include <complex>
#include <vector>

#include "sep/errors.hpp"

namespace sep {

struct StftConfig {
    int frame_len = 1024;   // L, even, >= 8
    double overlap = 0.70;
    int trunc_len = 720;    // retained real coefficients per frame
    void validate() const;
    int hop() const;        // max(1, round((1-overlap)*L)); 307 for defaults
    int num_bins() const { return frame_len / 2 + 1; }
};

struct PackedSpectrogram {
    std::vector<std::vector<double>> frames;  // num_frames x trunc_len
    StftConfig config;
    size_t original_len = 0;
    size_t num_frames() const { return frames.size(); }
};

// Frequency-interleaved packing of the one-sided spectrum with Parseval scaling:
// [Re(b0), Re(bL/2), Re(b1), Im(b1), Re(b2), Im(b2), ...] — a length cutoff is a
// frequency cutoff. pack truncates to cfg.trunc_len; unpack zero-fills the tail.
std::vector<double> pack_spectrum(const std::vector<std::complex<double>>& bins,
                                  const StftConfig& cfg);
std::vector<std::complex<double>> unpack_spectrum(const std::vector<double>& packed,
                                                  const StftConfig& cfg);

std::vector<double> hann_periodic(int len);

PackedSpectrogram analyze(const std::vector<double>& signal, const StftConfig& cfg);
std::vector<double> synthesize(const PackedSpectrogram& spec);

} // namespace sep

#endif
