#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "kws/audio_io.hpp"
#include "kws/fft.hpp"

namespace kws {

/// Front-end geometry and analysis parameters. The defaults fix the network
/// input width at n_coeffs x frames_per_window = 13 x 48 = 624.
struct FeatureConfig {
  int sample_rate_hz = 8000;
  int frame_length = 240;  // 30 ms
  int frame_stride = 80;   // 10 ms
  int fft_size = 256;
  int n_coeffs = 13;
  int n_mel_filters = 26;
  int n_bark_bands = 21;
  int lpc_order = 12;
  double preemphasis = 0.97;
  double energy_floor = 1e-10;
  int window_ms = 500;

  int window_samples() const { return window_ms * sample_rate_hz / 1000; }
  int stride_ms() const { return frame_stride * 1000 / sample_rate_hz; }
  int frames_per_window() const {
    return (window_samples() - frame_length) / frame_stride + 1;
  }
  int window_dim() const { return n_coeffs * frames_per_window(); }

  /// Throws ValidationError on inconsistent geometry.
  void validate() const;
};

/// Overlapping frames of a signal, stored row-major.
struct FrameMatrix {
  std::vector<double> data;
  std::size_t frame_length = 0;
  std::size_t frame_stride = 0;
  std::size_t count = 0;

  std::span<const double> frame(std::size_t i) const {
    return {data.data() + i * frame_length, frame_length};
  }
};

/// Number of full frames; trailing partial frames are dropped.
std::size_t frame_count(std::size_t n_samples, std::size_t frame_length,
                        std::size_t frame_stride);

FrameMatrix frame_signal(std::span<const double> samples, std::size_t frame_length,
                         std::size_t frame_stride);

struct WindowOrigin {
  std::string clip_id;
  int start_ms = 0;
};

/// One 500 ms example: MFCC and PLP coefficients concatenated in frame order.
struct FeatureWindow {
  std::vector<double> mfcc;
  std::vector<double> plp;
  WindowOrigin origin;
};

/// Non-owning view of a window's two representations.
struct WindowView {
  std::span<const double> mfcc;
  std::span<const double> plp;
};

inline WindowView view(const FeatureWindow& w) { return {w.mfcc, w.plp}; }

struct LpcResult {
  std::vector<double> coeffs;      // predictor a_1..a_p
  std::vector<double> reflection;  // k_1..k_p
  double error = 0.0;              // final prediction-error power
};

/// Levinson-Durbin recursion on autocorrelation lags r[0..order].
/// Uses the predictor convention x[n] ~ sum_k a_k x[n-k].
LpcResult levinson_durbin(std::span<const double> autocorr, int order);

/// LPC predictor coefficients to cepstrum c_1..c_n (c_0 is not produced).
std::vector<double> lpc_to_cepstrum(std::span<const double> coeffs, int n_ceps);

/// Precomputed analysis tables for MFCC and PLP. Immutable after
/// construction and safe to share across threads.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(FeatureConfig cfg = {});

  const FeatureConfig& config() const { return cfg_; }

  std::vector<double> compute_mfcc(std::span<const double> frame) const;
  std::vector<double> compute_plp(std::span<const double> frame) const;

  // Stages of the MFCC pipeline, exposed for oracles and diagnostics.
  std::vector<double> mfcc_preprocess(std::span<const double> frame) const;
  std::vector<double> mel_energies(std::span<const double> power) const;
  std::vector<double> mfcc_from_power(std::span<const double> power) const;

  // Stages of the PLP pipeline.
  std::vector<double> plp_autocorrelation(std::span<const double> frame) const;
  LpcResult plp_lpc(std::span<const double> frame) const;

  /// Filter centre frequencies in Hz.
  const std::vector<double>& mel_centers() const { return mel_centers_; }
  const std::vector<double>& bark_centers_hz() const { return bark_centers_hz_; }

  /// MFCC and PLP for one frame, written into the given output slots.
  void compute_frame(std::span<const double> frame, std::span<double> mfcc_out,
                     std::span<double> plp_out) const;

  /// Features of the 500 ms span starting at start_ms.
  FeatureWindow extract_window(const AudioClip& clip, int start_ms) const;

 private:
  FeatureConfig cfg_;
  Fft fft_;
  std::vector<double> hamming_;
  std::vector<std::vector<double>> mel_weights_;   // [filter][bin]
  std::vector<std::vector<double>> bark_weights_;  // [band][bin]
  std::vector<double> loudness_;
  std::vector<double> dct_;   // [coeff][filter], orthonormal DCT-II
  std::vector<double> idft_;  // [lag][band]
  std::vector<double> mel_centers_;
  std::vector<double> bark_centers_hz_;
};

/// Shared extractor, default configuration unless replaced at startup.
const FeatureExtractor& default_extractor();

/// Replaces the shared extractor. Not thread-safe; references obtained
/// earlier dangle.
void set_default_feature_config(const FeatureConfig& cfg);

/// Per-frame features for a whole clip at the 10 ms stride. The window
/// starting at frame f is the contiguous slice [f * n_coeffs, (f + frames) * n_coeffs)
/// of each matrix, bit-identical to extract_window at start_ms = 10 f.
class ClipFeatures {
 public:
  ClipFeatures() = default;
  ClipFeatures(const AudioClip& clip, const FeatureExtractor& fx);

  const std::string& clip_id() const { return clip_id_; }
  std::size_t frame_count() const { return frames_; }
  /// Number of complete 500 ms windows on the 10 ms grid.
  std::size_t window_count() const;

  WindowView window(std::size_t index) const;
  FeatureWindow materialize(std::size_t index) const;

  int window_start_ms(std::size_t index) const {
    return static_cast<int>(index) * stride_ms_;
  }

 private:
  std::string clip_id_;
  std::size_t frames_ = 0;
  std::size_t coeffs_ = 0;
  std::size_t frames_per_window_ = 0;
  int stride_ms_ = 10;
  std::vector<double> mfcc_;
  std::vector<double> plp_;
};

/// Debug dump with header `origin,repr,frame,coeff,value`.
void write_feature_csv(std::ostream& out, const FeatureWindow& w, int n_coeffs);

}  // namespace kws
