#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sere {

/// Decoded mono audio. Samples are normalized to [-1, 1].
struct AudioBuffer {
    std::vector<double> samples;
    int sample_rate = 0;
};

/// Decodes a RIFF/WAVE container (PCM 16-bit or IEEE float 32-bit).
/// Multichannel input is mixed down by averaging; integer PCM is scaled
/// by 1/32768. Throws FormatError on a malformed container,
/// UnsupportedError on other codecs, ValidationError on non-finite
/// float samples.
AudioBuffer decode_wav(const std::vector<uint8_t>& bytes);

/// Reads and decodes a WAV file from disk.
AudioBuffer load_wav(const std::string& path);

/// Serializes mono samples as PCM 16-bit WAV (test/fixture helper).
std::vector<uint8_t> encode_wav_pcm16(const std::vector<double>& samples, int sample_rate);

}  // namespace sere
