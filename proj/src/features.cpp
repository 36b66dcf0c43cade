#include "kws/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <memory>
#include <numbers>
#include <ostream>

#include "kws/errors.hpp"

namespace kws {

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }
double hz_to_bark(double hz) { return 6.0 * std::asinh(hz / 600.0); }
double bark_to_hz(double bark) { return 600.0 * std::sinh(bark / 6.0); }

// Critical-band masking curve, offset in Bark from the band centre.
double critical_band(double dz) {
  if (dz < -1.3 || dz > 2.5) return 0.0;
  if (dz < -0.5) return std::pow(10.0, 2.5 * (dz + 0.5));
  if (dz <= 0.5) return 1.0;
  return std::pow(10.0, -1.0 * (dz - 0.5));
}

// Equal-loudness weighting for angular frequency w.
double equal_loudness(double hz) {
  const double w2 = std::pow(2.0 * std::numbers::pi * hz, 2);
  return (w2 + 56.8e6) * w2 * w2 / (std::pow(w2 + 6.3e6, 2) * (w2 + 0.38e9));
}

}  // namespace

void FeatureConfig::validate() const {
  if (sample_rate_hz <= 0 || frame_length <= 0 || frame_stride <= 0 ||
      fft_size < frame_length || n_coeffs <= 0 || n_mel_filters < n_coeffs ||
      n_bark_bands < 3 || lpc_order + 1 < n_coeffs || energy_floor <= 0.0 ||
      window_samples() < frame_length) {
    throw ValidationError("inconsistent feature configuration");
  }
  if ((sample_rate_hz * 10) % 1000 != 0 || frame_stride * 1000 % sample_rate_hz != 0) {
    throw ValidationError("frame stride must be a whole number of milliseconds");
  }
}

std::size_t frame_count(std::size_t n, std::size_t length, std::size_t stride) {
  if (n < length) return 0;
  return (n - length) / stride + 1;
}

FrameMatrix frame_signal(std::span<const double> samples, std::size_t frame_length,
                         std::size_t frame_stride) {
  KWS_REQUIRE(frame_length > 0 && frame_stride > 0, "frame length and stride must be positive");
  KWS_REQUIRE(samples.size() >= frame_length, "signal shorter than one frame");
  FrameMatrix m;
  m.frame_length = frame_length;
  m.frame_stride = frame_stride;
  m.count = frame_count(samples.size(), frame_length, frame_stride);
  m.data.resize(m.count * frame_length);
  for (std::size_t i = 0; i < m.count; ++i) {
    std::copy_n(samples.begin() + i * frame_stride, frame_length,
                m.data.begin() + i * frame_length);
  }
  return m;
}

LpcResult levinson_durbin(std::span<const double> r, int order) {
  KWS_REQUIRE(order >= 1 && r.size() >= static_cast<std::size_t>(order) + 1,
              "levinson_durbin needs order + 1 autocorrelation lags");
  KWS_REQUIRE(r[0] > 0.0, "levinson_durbin needs r[0] > 0");
  LpcResult out;
  out.coeffs.assign(order, 0.0);
  out.reflection.assign(order, 0.0);
  std::vector<double> prev(order, 0.0);
  double err = r[0];
  for (int i = 1; i <= order; ++i) {
    double acc = r[i];
    for (int j = 1; j < i; ++j) acc -= out.coeffs[j - 1] * r[i - j];
    const double k = acc / err;
    out.reflection[i - 1] = k;
    prev = out.coeffs;
    out.coeffs[i - 1] = k;
    for (int j = 1; j < i; ++j) out.coeffs[j - 1] = prev[j - 1] - k * prev[i - j - 1];
    err *= (1.0 - k * k);
  }
  out.error = err;
  return out;
}

std::vector<double> lpc_to_cepstrum(std::span<const double> a, int n_ceps) {
  const int p = static_cast<int>(a.size());
  std::vector<double> c(n_ceps + 1, 0.0);  // c[0] unused here
  for (int n = 1; n <= n_ceps; ++n) {
    double acc = n <= p ? a[n - 1] : 0.0;
    for (int k = std::max(1, n - p); k < n; ++k) {
      acc += (static_cast<double>(k) / n) * c[k] * a[n - k - 1];
    }
    c[n] = acc;
  }
  return {c.begin() + 1, c.end()};
}

FeatureExtractor::FeatureExtractor(FeatureConfig cfg)
    : cfg_(cfg), fft_((cfg.validate(), static_cast<std::size_t>(cfg.fft_size))) {
  const int n = cfg_.frame_length;
  const int bins = cfg_.fft_size / 2 + 1;
  const double nyquist = cfg_.sample_rate_hz / 2.0;
  const double bin_hz = static_cast<double>(cfg_.sample_rate_hz) / cfg_.fft_size;

  hamming_.resize(n);
  for (int i = 0; i < n; ++i) {
    hamming_[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (n - 1));
  }

  // Triangular mel filters with edges equally spaced on the mel axis.
  const int nm = cfg_.n_mel_filters;
  const double mel_hi = hz_to_mel(nyquist);
  std::vector<double> edges(nm + 2);
  for (int i = 0; i < nm + 2; ++i) edges[i] = mel_to_hz(mel_hi * i / (nm + 1));
  mel_weights_.assign(nm, std::vector<double>(bins, 0.0));
  mel_centers_.resize(nm);
  for (int m = 0; m < nm; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    mel_centers_[m] = mid;
    for (int b = 0; b < bins; ++b) {
      const double f = b * bin_hz;
      if (f > lo && f <= mid) {
        mel_weights_[m][b] = (f - lo) / (mid - lo);
      } else if (f > mid && f < hi) {
        mel_weights_[m][b] = (hi - f) / (hi - mid);
      }
    }
  }

  // Orthonormal DCT-II rows for the retained coefficients.
  dct_.resize(static_cast<std::size_t>(cfg_.n_coeffs) * nm);
  for (int k = 0; k < cfg_.n_coeffs; ++k) {
    const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / nm);
    for (int j = 0; j < nm; ++j) {
      dct_[k * nm + j] = scale * std::cos(std::numbers::pi * k * (j + 0.5) / nm);
    }
  }

  // Critical bands with centres equally spaced in Bark strictly inside
  // (0, Nyquist).
  const int nb = cfg_.n_bark_bands;
  const double bark_hi = hz_to_bark(nyquist);
  bark_weights_.assign(nb, std::vector<double>(bins, 0.0));
  bark_centers_hz_.resize(nb);
  loudness_.resize(nb);
  for (int k = 0; k < nb; ++k) {
    const double zc = bark_hi * (k + 1) / (nb + 1);
    bark_centers_hz_[k] = bark_to_hz(zc);
    loudness_[k] = equal_loudness(bark_centers_hz_[k]);
    for (int b = 0; b < bins; ++b) {
      bark_weights_[k][b] = critical_band(hz_to_bark(b * bin_hz) - zc);
    }
  }

  // Cosine transform from the band spectrum (taken as samples from DC to
  // Nyquist of an even, real spectrum) to autocorrelation lags.
  const int lags = cfg_.lpc_order + 1;
  const int period = 2 * (nb - 1);
  idft_.resize(static_cast<std::size_t>(lags) * nb);
  for (int m = 0; m < lags; ++m) {
    for (int k = 0; k < nb; ++k) {
      const double w = (k == 0 || k == nb - 1) ? 1.0 : 2.0;
      idft_[m * nb + k] = w * std::cos(std::numbers::pi * k * m / (nb - 1)) / period;
    }
  }
}

std::vector<double> FeatureExtractor::mfcc_preprocess(std::span<const double> frame) const {
  KWS_REQUIRE(frame.size() == static_cast<std::size_t>(cfg_.frame_length),
              "frame has wrong length");
  std::vector<double> out(frame.size());
  out[0] = frame[0] * hamming_[0];
  for (std::size_t i = 1; i < frame.size(); ++i) {
    out[i] = (frame[i] - cfg_.preemphasis * frame[i - 1]) * hamming_[i];
  }
  return out;
}

std::vector<double> FeatureExtractor::mel_energies(std::span<const double> power) const {
  std::vector<double> e(mel_weights_.size(), 0.0);
  for (std::size_t m = 0; m < e.size(); ++m) {
    double acc = 0.0;
    for (std::size_t b = 0; b < power.size(); ++b) acc += mel_weights_[m][b] * power[b];
    e[m] = acc;
  }
  return e;
}

std::vector<double> FeatureExtractor::mfcc_from_power(std::span<const double> power) const {
  KWS_REQUIRE(power.size() == static_cast<std::size_t>(cfg_.fft_size / 2 + 1),
              "power spectrum has wrong length");
  auto logs = mel_energies(power);
  for (auto& v : logs) v = std::log(std::max(v, cfg_.energy_floor));
  const int nm = cfg_.n_mel_filters;
  std::vector<double> c(cfg_.n_coeffs, 0.0);
  for (int k = 0; k < cfg_.n_coeffs; ++k) {
    double acc = 0.0;
    for (int j = 0; j < nm; ++j) acc += dct_[k * nm + j] * logs[j];
    c[k] = acc;
  }
  return c;
}

std::vector<double> FeatureExtractor::compute_mfcc(std::span<const double> frame) const {
  const auto pre = mfcc_preprocess(frame);
  std::vector<double> power(cfg_.fft_size / 2 + 1);
  fft_.power_spectrum(pre, power);
  return mfcc_from_power(power);
}

std::vector<double> FeatureExtractor::plp_autocorrelation(std::span<const double> frame) const {
  KWS_REQUIRE(frame.size() == static_cast<std::size_t>(cfg_.frame_length),
              "frame has wrong length");
  std::vector<double> windowed(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) windowed[i] = frame[i] * hamming_[i];
  std::vector<double> power(cfg_.fft_size / 2 + 1);
  fft_.power_spectrum(windowed, power);

  const int nb = cfg_.n_bark_bands;
  std::vector<double> bands(nb);
  for (int k = 0; k < nb; ++k) {
    double acc = 0.0;
    for (std::size_t b = 0; b < power.size(); ++b) acc += bark_weights_[k][b] * power[b];
    bands[k] = std::cbrt(acc * loudness_[k]);
  }
  const int lags = cfg_.lpc_order + 1;
  std::vector<double> r(lags);
  for (int m = 0; m < lags; ++m) {
    double acc = 0.0;
    for (int k = 0; k < nb; ++k) acc += idft_[m * nb + k] * bands[k];
    r[m] = acc;
  }
  r[0] = std::max(r[0], cfg_.energy_floor);
  return r;
}

LpcResult FeatureExtractor::plp_lpc(std::span<const double> frame) const {
  return levinson_durbin(plp_autocorrelation(frame), cfg_.lpc_order);
}

std::vector<double> FeatureExtractor::compute_plp(std::span<const double> frame) const {
  const auto lpc = plp_lpc(frame);
  std::vector<double> c(cfg_.n_coeffs);
  c[0] = std::log(std::max(lpc.error, cfg_.energy_floor));
  const auto ceps = lpc_to_cepstrum(lpc.coeffs, cfg_.n_coeffs - 1);
  std::copy(ceps.begin(), ceps.end(), c.begin() + 1);
  return c;
}

void FeatureExtractor::compute_frame(std::span<const double> frame, std::span<double> mfcc_out,
                                     std::span<double> plp_out) const {
  const auto m = compute_mfcc(frame);
  const auto p = compute_plp(frame);
  std::copy(m.begin(), m.end(), mfcc_out.begin());
  std::copy(p.begin(), p.end(), plp_out.begin());
}

FeatureWindow FeatureExtractor::extract_window(const AudioClip& clip, int start_ms) const {
  KWS_REQUIRE(clip.sample_rate_hz == cfg_.sample_rate_hz, "clip is not at the analysis rate");
  KWS_REQUIRE(start_ms >= 0, "window start is negative");
  const auto start = static_cast<std::size_t>(start_ms) * cfg_.sample_rate_hz / 1000;
  const auto len = static_cast<std::size_t>(cfg_.window_samples());
  KWS_REQUIRE(start + len <= clip.samples.size(),
              "window [" + std::to_string(start_ms) + " ms, +" +
                  std::to_string(cfg_.window_ms) + " ms) exceeds clip " + clip.id);

  const auto frames = frame_signal(std::span(clip.samples).subspan(start, len),
                                   cfg_.frame_length, cfg_.frame_stride);
  const auto nc = static_cast<std::size_t>(cfg_.n_coeffs);
  FeatureWindow w;
  w.mfcc.resize(frames.count * nc);
  w.plp.resize(frames.count * nc);
  for (std::size_t f = 0; f < frames.count; ++f) {
    compute_frame(frames.frame(f), std::span(w.mfcc).subspan(f * nc, nc),
                  std::span(w.plp).subspan(f * nc, nc));
  }
  w.origin = {clip.id, start_ms};
  return w;
}

namespace {
std::unique_ptr<FeatureExtractor>& default_slot() {
  static std::unique_ptr<FeatureExtractor> fx = std::make_unique<FeatureExtractor>();
  return fx;
}
}  // namespace

const FeatureExtractor& default_extractor() { return *default_slot(); }

void set_default_feature_config(const FeatureConfig& cfg) {
  default_slot() = std::make_unique<FeatureExtractor>(cfg);
}

ClipFeatures::ClipFeatures(const AudioClip& clip, const FeatureExtractor& fx)
    : clip_id_(clip.id) {
  const auto& cfg = fx.config();
  KWS_REQUIRE(clip.sample_rate_hz == cfg.sample_rate_hz, "clip is not at the analysis rate");
  coeffs_ = static_cast<std::size_t>(cfg.n_coeffs);
  frames_per_window_ = static_cast<std::size_t>(cfg.frames_per_window());
  stride_ms_ = cfg.stride_ms();
  frames_ = kws::frame_count(clip.samples.size(), cfg.frame_length, cfg.frame_stride);
  mfcc_.resize(frames_ * coeffs_);
  plp_.resize(frames_ * coeffs_);
  for (std::size_t f = 0; f < frames_; ++f) {
    fx.compute_frame(
        std::span(clip.samples).subspan(f * cfg.frame_stride, cfg.frame_length),
        std::span(mfcc_).subspan(f * coeffs_, coeffs_),
        std::span(plp_).subspan(f * coeffs_, coeffs_));
  }
}

std::size_t ClipFeatures::window_count() const {
  return frames_ >= frames_per_window_ ? frames_ - frames_per_window_ + 1 : 0;
}

WindowView ClipFeatures::window(std::size_t index) const {
  KWS_REQUIRE(index < window_count(), "window index out of range");
  const std::size_t len = frames_per_window_ * coeffs_;
  return {std::span(mfcc_).subspan(index * coeffs_, len),
          std::span(plp_).subspan(index * coeffs_, len)};
}

FeatureWindow ClipFeatures::materialize(std::size_t index) const {
  const auto v = window(index);
  return {{v.mfcc.begin(), v.mfcc.end()},
          {v.plp.begin(), v.plp.end()},
          {clip_id_, window_start_ms(index)}};
}

void write_feature_csv(std::ostream& out, const FeatureWindow& w, int n_coeffs) {
  out << "origin,repr,frame,coeff,value\n";
  const std::string origin = w.origin.clip_id + "@" + std::to_string(w.origin.start_ms);
  char buf[64];
  auto dump = [&](const std::vector<double>& v, const char* name) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      const auto res = std::to_chars(buf, buf + sizeof buf, v[i]);
      out << origin << ',' << name << ',' << i / n_coeffs << ',' << i % n_coeffs << ','
          << std::string_view(buf, res.ptr - buf) << '\n';
    }
  };
  dump(w.mfcc, "mfcc");
  dump(w.plp, "plp");
}

}  // namespace kws
