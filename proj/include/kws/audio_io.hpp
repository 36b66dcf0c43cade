#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace kws {

inline constexpr int kNarrowBandRate = 8000;

/// Mono PCM audio, samples in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  int sample_rate_hz = kNarrowBandRate;
  std::string id;

  double duration_ms() const {
    return 1000.0 * static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

bool is_ingest_rate(int hz);

/// Reads a RIFF/WAVE file with 16-bit PCM payload. Stereo is averaged.
/// The clip id is the file stem.
AudioClip read_wav(const std::filesystem::path& path);

/// Writes 16-bit PCM mono. Samples are clamped to [-1, 1], scaled by 32767
/// and rounded half away from zero.
void write_wav(const AudioClip& clip, const std::filesystem::path& path);

/// Encodes the int16 payload write_wav would produce, without touching disk.
std::vector<std::int16_t> to_pcm16(const std::vector<double>& samples);

namespace g711 {

/// 8-bit mu-law code (mu = 255) for a 16-bit linear sample.
std::uint8_t linear_to_ulaw(std::int16_t pcm);
std::int16_t ulaw_to_linear(std::uint8_t code);

}  // namespace g711

/// Passes each sample through a G.711 mu-law encode/decode pair.
AudioClip mulaw_roundtrip(const AudioClip& clip);

/// Windowed-sinc low-pass (101 taps, cutoff 0.45 x target) then integer
/// decimation. Throws UnsupportedError for non-integer rate ratios.
AudioClip downsample(const AudioClip& clip, int target_hz);

/// Design of the anti-aliasing filter used by downsample, exposed for tests.
std::vector<double> lowpass_taps(int taps, double cutoff_cycles_per_sample);

/// Resamples any supported ingest rate to 8 kHz.
AudioClip to_narrow_band(const AudioClip& clip);

}  // namespace kws
