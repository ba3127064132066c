#include "sere/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "sere/errors.hpp"

namespace sere {

namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatIeeeFloat = 3;

uint32_t read_u32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t read_u16(const uint8_t* p) {
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

AudioBuffer decode_wav(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw FormatError("not a RIFF/WAVE container");
    }

    uint16_t format = 0;
    uint16_t channels = 0;
    uint32_t sample_rate = 0;
    uint16_t bits_per_sample = 0;
    bool have_fmt = false;
    const uint8_t* data = nullptr;
    uint32_t data_size = 0;

    size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const uint8_t* hdr = bytes.data() + pos;
        uint32_t chunk_size = read_u32(hdr + 4);
        pos += 8;
        if (pos + chunk_size > bytes.size()) {
            throw FormatError("chunk extends past end of file");
        }
        if (std::memcmp(hdr, "fmt ", 4) == 0) {
            if (chunk_size < 16) throw FormatError("fmt chunk too short");
            format = read_u16(bytes.data() + pos);
            channels = read_u16(bytes.data() + pos + 2);
            sample_rate = read_u32(bytes.data() + pos + 4);
            bits_per_sample = read_u16(bytes.data() + pos + 14);
            have_fmt = true;
        } else if (std::memcmp(hdr, "data", 4) == 0) {
            data = bytes.data() + pos;
            data_size = chunk_size;
        }
        pos += chunk_size + (chunk_size & 1);  // chunks are word-aligned
    }

    if (!have_fmt || data == nullptr) throw FormatError("missing fmt or data chunk");
    if (channels == 0 || sample_rate == 0) throw FormatError("bad fmt fields");

    if (format == kFormatPcm) {
        if (bits_per_sample != 16) {
            throw UnsupportedError("only 16-bit PCM is supported");
        }
    } else if (format == kFormatIeeeFloat) {
        if (bits_per_sample != 32) {
            throw UnsupportedError("only 32-bit IEEE float is supported");
        }
    } else {
        throw UnsupportedError("unsupported WAV codec tag " + std::to_string(format));
    }

    const uint32_t bytes_per_sample = bits_per_sample / 8;
    const uint32_t frame_size = bytes_per_sample * channels;
    const uint32_t num_frames = data_size / frame_size;

    AudioBuffer out;
    out.sample_rate = static_cast<int>(sample_rate);
    out.samples.resize(num_frames);

    for (uint32_t f = 0; f < num_frames; ++f) {
        double acc = 0.0;
        for (uint16_t ch = 0; ch < channels; ++ch) {
            const uint8_t* p = data + static_cast<size_t>(f) * frame_size + ch * bytes_per_sample;
            if (format == kFormatPcm) {
                int16_t raw;
                std::memcpy(&raw, p, 2);
                acc += static_cast<double>(raw) / 32768.0;
            } else {
                float raw;
                std::memcpy(&raw, p, 4);
                if (!std::isfinite(raw)) throw ValidationError("non-finite sample in float WAV");
                acc += static_cast<double>(raw);
            }
        }
        double v = acc / channels;
        out.samples[f] = std::clamp(v, -1.0, 1.0);
    }
    return out;
}

AudioBuffer load_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open WAV file: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    return decode_wav(bytes);
}

std::vector<uint8_t> encode_wav_pcm16(const std::vector<double>& samples, int sample_rate) {
    const uint32_t data_size = static_cast<uint32_t>(samples.size() * 2);
    std::vector<uint8_t> out(44 + data_size);

    auto put_u32 = [&](size_t at, uint32_t v) {
        out[at] = v & 0xFF;
        out[at + 1] = (v >> 8) & 0xFF;
        out[at + 2] = (v >> 16) & 0xFF;
        out[at + 3] = (v >> 24) & 0xFF;
    };
    auto put_u16 = [&](size_t at, uint16_t v) {
        out[at] = v & 0xFF;
        out[at + 1] = (v >> 8) & 0xFF;
    };

    std::memcpy(out.data(), "RIFF", 4);
    put_u32(4, 36 + data_size);
    std::memcpy(out.data() + 8, "WAVE", 4);
    std::memcpy(out.data() + 12, "fmt ", 4);
    put_u32(16, 16);
    put_u16(20, kFormatPcm);
    put_u16(22, 1);
    put_u32(24, static_cast<uint32_t>(sample_rate));
    put_u32(28, static_cast<uint32_t>(sample_rate) * 2);
    put_u16(32, 2);
    put_u16(34, 16);
    std::memcpy(out.data() + 36, "data", 4);
    put_u32(40, data_size);

    for (size_t i = 0; i < samples.size(); ++i) {
        double v = std::clamp(samples[i], -1.0, 1.0);
        int s = static_cast<int>(std::lrint(v * 32767.0));
        put_u16(44 + 2 * i, static_cast<uint16_t>(static_cast<int16_t>(s)));
    }
    return out;
}

}  // namespace sere
