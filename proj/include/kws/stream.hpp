#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "kws/cascade.hpp"
#include "kws/features.hpp"

namespace kws {

inline constexpr int kMaxStages = 3;

struct DetectionEvent {
  std::int64_t time_ms = 0;  // end of the triggering window
  double confidence = 0.0;   // noisy-or over the horizon
  std::array<std::uint64_t, kMaxStages> stages_histogram{};  // exits per stage since last event

  bool operator==(const DetectionEvent&) const = default;
};

struct StreamConfig {
  int horizon_ticks = 50;
  int refractory_ms = 1000;
  std::optional<double> detection_threshold;  // defaults to the cascade's

  void validate() const;
};

/// Noisy-or over a trailing horizon of window probabilities with a
/// refractory period. Separated from feature extraction so threshold sweeps
/// can replay cached probabilities.
class EventAggregator {
 public:
  EventAggregator(double detection_threshold, int horizon_ticks, int refractory_ms);

  /// One tick: window contribution, the stage it exited at (1-based) and the
  /// tick's timestamp.
  std::optional<DetectionEvent> push(double contribution, int stages_evaluated,
                                     std::int64_t time_ms);

  std::size_t queue_size() const { return queue_.size(); }

 private:
  double threshold_;
  std::size_t horizon_;
  std::int64_t refractory_ms_;
  std::deque<double> queue_;
  std::array<std::uint64_t, kMaxStages> histogram_{};
  std::optional<std::int64_t> last_event_ms_;
};

/// Probability a window adds to the horizon: zero when the cascade rejected
/// it before its final stage, else the final stage's score.
double window_contribution(const WindowDecision& d, std::size_t n_stages);

/// Real-time detector. Tick n analyses samples [80 n, 80 n + 4000) and is
/// stamped at the end of that span; it becomes legal once those samples have
/// been pushed.
class StreamDetector {
 public:
  StreamDetector(const CascadeModel& cascade, StreamConfig cfg = {},
                 const FeatureExtractor& fx = default_extractor());

  void push_audio(std::span<const double> samples);

  /// True when the next tick's 500 ms of audio has arrived.
  bool can_tick() const;

  /// Throws PreconditionError during warm-up.
  std::optional<DetectionEvent> tick();

  std::size_t buffered() const { return buffer_.size() - head_; }
  std::uint64_t ticks() const { return next_tick_; }
  std::uint64_t total_pushed() const { return total_pushed_; }
  /// Exits per stage over the whole session.
  const std::array<std::uint64_t, kMaxStages>& exits() const { return exits_; }

 private:
  void compute_frames_through(std::uint64_t frame);
  double sample_at(std::uint64_t absolute) const;

  const CascadeModel& cascade_;
  const FeatureExtractor& fx_;
  EventAggregator agg_;
  std::size_t window_samples_;
  std::size_t stride_;
  std::size_t frame_length_;
  std::size_t frames_per_window_;
  std::size_t coeffs_;

  std::vector<double> buffer_;
  std::size_t head_ = 0;             // index in buffer_ of absolute sample base_
  std::uint64_t base_ = 0;           // absolute index of buffer_[head_]
  std::uint64_t total_pushed_ = 0;
  std::uint64_t next_tick_ = 0;
  std::uint64_t frames_done_ = 0;    // frames [0, frames_done_) computed
  std::vector<double> mfcc_ring_;    // frames_per_window x coeffs
  std::vector<double> plp_ring_;
  std::vector<double> mfcc_window_;
  std::vector<double> plp_window_;
  std::vector<double> frame_;
  std::array<std::uint64_t, kMaxStages> exits_{};
};

/// Replays a clip at the 10 ms cadence.
std::vector<DetectionEvent> run_file(const AudioClip& clip, const CascadeModel& cascade,
                                     const StreamConfig& cfg = {});

/// CSV `time_ms,confidence,stage1_exits,stage2_exits,stage3_exits`.
void write_event_header(std::ostream& out);
void write_event(std::ostream& out, const DetectionEvent& e);

}  // namespace kws
