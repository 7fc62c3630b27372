#ifndef SEP_WAV_HPP
#define SEP_WAV_HPP

#include <string>
#include <vector>

#include "sep/errors.hpp"

namespace sep {

enum class WavFormat { pcm16, float32 };

struct WavData {
    std::vector<std::vector<double>> channels;  // deinterleaved, [-1,1] nominal
    int sample_rate = 44100;
    WavFormat format = WavFormat::pcm16;
    size_t num_samples() const { return channels.empty() ? 0 : channels.front().size(); }
};

WavData read_wav(const std::string& path);
void write_wav(const std::string& path, const std::vector<std::vector<double>>& channels,
               int sample_rate, WavFormat format = WavFormat::float32);

} // namespace sep

#endif
