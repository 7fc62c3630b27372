#include "sep/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace sep {

namespace {

uint32_t rd_u32(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
uint16_t rd_u16(const unsigned char* p) {
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
}
void wr_u32(std::ofstream& f, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<char*>(b), 4);
}
void wr_u16(std::ofstream& f, uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    f.write(reinterpret_cast<char*>(b), 2);
}

} // namespace

WavData read_wav(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ContractError("cannot open WAV file: " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
    if (buf.size() < 44 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
        std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
        throw ContractError("not a RIFF/WAVE file: " + path);

    uint16_t audio_fmt = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    const unsigned char* data = nullptr;
    uint32_t data_len = 0;

    size_t pos = 12;
    while (pos + 8 <= buf.size()) {
        const char* id = reinterpret_cast<const char*>(buf.data() + pos);
        const uint32_t len = rd_u32(buf.data() + pos + 4);
        const size_t body = pos + 8;
        if (body + len > buf.size()) break;
        if (std::memcmp(id, "fmt ", 4) == 0 && len >= 16) {
            audio_fmt = rd_u16(buf.data() + body);
            channels = rd_u16(buf.data() + body + 2);
            rate = rd_u32(buf.data() + body + 4);
            bits = rd_u16(buf.data() + body + 14);
        } else if (std::memcmp(id, "data", 4) == 0) {
            data = buf.data() + body;
            data_len = len;
        }
        pos = body + len + (len & 1);  // chunks are word-aligned
    }
    if (!data || channels == 0) throw ContractError("WAV missing fmt/data chunk: " + path);

    WavData w;
    w.sample_rate = static_cast<int>(rate);
    w.channels.resize(channels);
    if (audio_fmt == 1 && bits == 16) {
        w.format = WavFormat::pcm16;
        const size_t nsamp = data_len / (2u * channels);
        for (auto& ch : w.channels) ch.resize(nsamp);
        for (size_t i = 0; i < nsamp; ++i)
            for (uint16_t c = 0; c < channels; ++c) {
                const unsigned char* p = data + (i * channels + c) * 2;
                const int16_t v = static_cast<int16_t>(p[0] | (p[1] << 8));
                w.channels[c][i] = v / 32768.0;
            }
    } else if (audio_fmt == 3 && bits == 32) {
        w.format = WavFormat::float32;
        const size_t nsamp = data_len / (4u * channels);
        for (auto& ch : w.channels) ch.resize(nsamp);
        for (size_t i = 0; i < nsamp; ++i)
            for (uint16_t c = 0; c < channels; ++c) {
                float v;
                std::memcpy(&v, data + (i * channels + c) * 4, 4);
                w.channels[c][i] = static_cast<double>(v);
            }
    } else {
        throw ContractError("unsupported WAV format " + std::to_string(audio_fmt) + "/" +
                            std::to_string(bits) + "-bit in " + path +
                            " (PCM16 and float32 supported)");
    }
    return w;
}

void write_wav(const std::string& path, const std::vector<std::vector<double>>& channels,
               int sample_rate, WavFormat format) {
    if (channels.empty()) throw ContractError("write_wav: no channels");
    const size_t nsamp = channels.front().size();
    for (const auto& ch : channels)
        if (ch.size() != nsamp) throw ContractError("write_wav: channel length mismatch");

    const uint16_t nch = static_cast<uint16_t>(channels.size());
    const uint16_t bytes_per = format == WavFormat::pcm16 ? 2 : 4;
    const uint32_t data_len = static_cast<uint32_t>(nsamp * nch * bytes_per);

    std::ofstream f(path, std::ios::binary);
    if (!f) throw ContractError("cannot create WAV file: " + path);
    f.write("RIFF", 4);
    wr_u32(f, 36 + data_len);
    f.write("WAVE", 4);
    f.write("fmt ", 4);
    wr_u32(f, 16);
    wr_u16(f, format == WavFormat::pcm16 ? 1 : 3);
    wr_u16(f, nch);
    wr_u32(f, static_cast<uint32_t>(sample_rate));
    wr_u32(f, static_cast<uint32_t>(sample_rate) * nch * bytes_per);
    wr_u16(f, static_cast<uint16_t>(nch * bytes_per));
    wr_u16(f, static_cast<uint16_t>(bytes_per * 8));
    f.write("data", 4);
    wr_u32(f, data_len);

    if (format == WavFormat::pcm16) {
        for (size_t i = 0; i < nsamp; ++i)
            for (uint16_t c = 0; c < nch; ++c) {
                const double x = std::clamp(channels[c][i], -1.0, 1.0);
                // same 1/32768 scale as the reader, so a round trip only rounds
                const long q = std::lrint(x * 32768.0);
                const int16_t v = static_cast<int16_t>(std::clamp(q, -32768L, 32767L));
                wr_u16(f, static_cast<uint16_t>(v));
            }
    } else {
        for (size_t i = 0; i < nsamp; ++i)
            for (uint16_t c = 0; c < nch; ++c) {
                const float v = static_cast<float>(channels[c][i]);
                uint32_t u;
                std::memcpy(&u, &v, 4);
                wr_u32(f, u);
            }
    }
    if (!f) throw ContractError("write_wav: I/O failure writing " + path);
}

} // namespace sep
