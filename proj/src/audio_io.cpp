#include "kws/audio_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "kws/errors.hpp"

namespace kws {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
         (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return std::uint16_t(p[0] | (p[1] << 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

double blackman(int n, int taps) {
  const double x = 2.0 * std::numbers::pi * n / (taps - 1);
  return 0.42 - 0.5 * std::cos(x) + 0.08 * std::cos(2.0 * x);
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

bool is_ingest_rate(int hz) {
  return hz == 8000 || hz == 16000 || hz == 44100 || hz == 48000;
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError(path.string() + ": not a RIFF/WAVE file");
  }

  bool have_fmt = false;
  int channels = 0;
  int rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t len = read_u32(chunk + 4);
    if (pos + 8 + len > bytes.size()) {
      throw FormatError(path.string() + ": truncated chunk");
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (len < 16) throw FormatError(path.string() + ": short fmt chunk");
      const int format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = static_cast<int>(read_u32(chunk + 12));
      const int bits = read_u16(chunk + 22);
      if (format != 1) throw UnsupportedError(path.string() + ": encoding is not PCM");
      if (bits != 16) throw UnsupportedError(path.string() + ": only 16-bit PCM is supported");
      if (channels != 1 && channels != 2) {
        throw UnsupportedError(path.string() + ": only mono or stereo is supported");
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_len = len;
    }
    pos += 8 + len + (len & 1);
  }
  if (!have_fmt || data == nullptr) {
    throw FormatError(path.string() + ": missing fmt or data chunk");
  }
  if (!is_ingest_rate(rate)) {
    throw UnsupportedError(path.string() + ": sample rate " + std::to_string(rate));
  }

  AudioClip clip;
  clip.sample_rate_hz = rate;
  clip.id = path.stem().string();
  const std::size_t frames = data_len / (2 * static_cast<std::size_t>(channels));
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    const unsigned char* f = data + i * 2 * channels;
    if (channels == 1) {
      clip.samples[i] = static_cast<std::int16_t>(read_u16(f)) / 32768.0;
    } else {
      const double l = static_cast<std::int16_t>(read_u16(f));
      const double r = static_cast<std::int16_t>(read_u16(f + 2));
      clip.samples[i] = 0.5 * (l + r) / 32768.0;
    }
  }
  return clip;
}

std::vector<std::int16_t> to_pcm16(const std::vector<double>& samples) {
  std::vector<std::int16_t> pcm(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double x = std::clamp(samples[i], -1.0, 1.0);
    pcm[i] = static_cast<std::int16_t>(std::round(x * 32767.0));
  }
  return pcm;
}

void write_wav(const AudioClip& clip, const std::filesystem::path& path) {
  const auto pcm = to_pcm16(clip.samples);
  const auto data_len = static_cast<std::uint32_t>(pcm.size() * 2);

  std::string out;
  out.reserve(44 + data_len);
  out += "RIFF";
  put_u32(out, 36 + data_len);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate_hz));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate_hz) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, data_len);
  for (auto s : pcm) put_u16(out, static_cast<std::uint16_t>(s));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed for " + path.string());
}

namespace g711 {

namespace {
constexpr int kBias = 0x84;
constexpr int kClip = 32635;
}  // namespace

std::uint8_t linear_to_ulaw(std::int16_t pcm) {
  int v = pcm;
  int sign = 0;
  if (v < 0) {
    v = -v;
    sign = 0x80;
  }
  v = std::min(v, kClip) + kBias;
  // Segment = position of the leading one above bit 7.
  const int segment = std::bit_width(static_cast<unsigned>(v >> 7)) - 1;
  const int mantissa = (v >> (segment + 3)) & 0x0F;
  return static_cast<std::uint8_t>(~(sign | (segment << 4) | mantissa));
}

std::int16_t ulaw_to_linear(std::uint8_t code) {
  const int u = static_cast<std::uint8_t>(~code);
  const int segment = (u >> 4) & 0x07;
  const int t = (((u & 0x0F) << 3) + kBias) << segment;
  return static_cast<std::int16_t>((u & 0x80) ? (kBias - t) : (t - kBias));
}

}  // namespace g711

AudioClip mulaw_roundtrip(const AudioClip& clip) {
  KWS_REQUIRE(clip.sample_rate_hz == kNarrowBandRate,
              "mulaw_roundtrip requires 8000 Hz audio");
  AudioClip out;
  out.id = clip.id;
  out.sample_rate_hz = clip.sample_rate_hz;
  out.samples.resize(clip.samples.size());
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    const double scaled = std::round(std::clamp(clip.samples[i], -1.0, 1.0) * 32768.0);
    const auto pcm = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
    out.samples[i] = g711::ulaw_to_linear(g711::linear_to_ulaw(pcm)) / 32768.0;
  }
  return out;
}

std::vector<double> lowpass_taps(int taps, double cutoff) {
  std::vector<double> h(static_cast<std::size_t>(taps));
  const int mid = (taps - 1) / 2;
  double sum = 0.0;
  for (int n = 0; n < taps; ++n) {
    h[n] = 2.0 * cutoff * sinc(2.0 * cutoff * (n - mid)) * blackman(n, taps);
    sum += h[n];
  }
  for (auto& v : h) v /= sum;  // unity DC gain
  return h;
}

AudioClip downsample(const AudioClip& clip, int target_hz) {
  if (target_hz <= 0) throw ValidationError("target rate must be positive");
  if (clip.sample_rate_hz % target_hz != 0) {
    throw UnsupportedError("downsample: " + std::to_string(clip.sample_rate_hz) +
                           " Hz is not an integer multiple of " +
                           std::to_string(target_hz) + " Hz");
  }
  const int factor = clip.sample_rate_hz / target_hz;
  AudioClip out;
  out.id = clip.id;
  out.sample_rate_hz = target_hz;
  if (factor == 1) {
    out.samples = clip.samples;
    return out;
  }

  constexpr int kTaps = 101;
  constexpr int kMid = kTaps / 2;
  const auto h = lowpass_taps(kTaps, 0.45 * target_hz / clip.sample_rate_hz);
  const auto& x = clip.samples;
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  out.samples.resize((x.size() + factor - 1) / factor);
  for (std::size_t m = 0; m < out.samples.size(); ++m) {
    const auto center = static_cast<std::ptrdiff_t>(m) * factor;
    double acc = 0.0;
    for (int k = 0; k < kTaps; ++k) {
      const auto idx = center + kMid - k;
      if (idx >= 0 && idx < n) acc += h[k] * x[idx];
    }
    out.samples[m] = acc;
  }
  return out;
}

namespace {

// Arbitrary-ratio band-limited interpolation with a Blackman-windowed sinc
// kernel evaluated at each output instant.
AudioClip resample_sinc(const AudioClip& clip, int target_hz) {
  constexpr int kHalfWidth = 50;  // input-rate zero crossings on each side at unity scale
  const double ratio = static_cast<double>(target_hz) / clip.sample_rate_hz;
  const double cutoff = 0.45 * 2.0 * ratio;  // relative to input Nyquist
  const double support = kHalfWidth / cutoff;
  const auto& x = clip.samples;
  const auto n = static_cast<std::ptrdiff_t>(x.size());

  AudioClip out;
  out.id = clip.id;
  out.sample_rate_hz = target_hz;
  out.samples.resize(static_cast<std::size_t>(std::floor(x.size() * ratio)));
  for (std::size_t m = 0; m < out.samples.size(); ++m) {
    const double t = m / ratio;
    const auto lo = static_cast<std::ptrdiff_t>(std::ceil(t - support));
    const auto hi = static_cast<std::ptrdiff_t>(std::floor(t + support));
    double acc = 0.0;
    double norm = 0.0;
    for (auto i = std::max<std::ptrdiff_t>(lo, 0); i <= std::min(hi, n - 1); ++i) {
      const double d = i - t;
      const double w = 0.42 + 0.5 * std::cos(std::numbers::pi * d / support) +
                       0.08 * std::cos(2.0 * std::numbers::pi * d / support);
      const double k = cutoff * sinc(cutoff * d) * w;
      acc += k * x[i];
      norm += k;
    }
    out.samples[m] = norm != 0.0 ? acc / norm : 0.0;
  }
  return out;
}

}  // namespace

AudioClip to_narrow_band(const AudioClip& clip) {
  if (!is_ingest_rate(clip.sample_rate_hz)) {
    throw UnsupportedError("unsupported sample rate " + std::to_string(clip.sample_rate_hz));
  }
  AudioClip out = clip.sample_rate_hz % kNarrowBandRate == 0
                      ? downsample(clip, kNarrowBandRate)
                      : resample_sinc(clip, kNarrowBandRate);
  for (auto& s : out.samples) s = std::clamp(s, -1.0, 1.0);
  return out;
}

}  // namespace kws
