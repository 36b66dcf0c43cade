#include "kws/stream.hpp"

#include <algorithm>
#include <ostream>

#include "kws/errors.hpp"
#include "kws/mil.hpp"
#include "kws/text.hpp"

namespace kws {

void StreamConfig::validate() const {
  if (horizon_ticks < 1) throw ValidationError("horizon must be at least one tick");
  if (refractory_ms < 0) throw ValidationError("refractory period must be non-negative");
  if (detection_threshold && !(*detection_threshold >= 0.0 && *detection_threshold <= 1.0)) {
    throw ValidationError("detection threshold must be in [0, 1]");
  }
}

EventAggregator::EventAggregator(double detection_threshold, int horizon_ticks,
                                 int refractory_ms)
    : threshold_(detection_threshold),
      horizon_(static_cast<std::size_t>(horizon_ticks)),
      refractory_ms_(refractory_ms) {
  KWS_REQUIRE(horizon_ticks >= 1, "horizon must be at least one tick");
}

std::optional<DetectionEvent> EventAggregator::push(double contribution, int stages_evaluated,
                                                    std::int64_t time_ms) {
  KWS_REQUIRE(stages_evaluated >= 1 && stages_evaluated <= kMaxStages,
              "stage index out of range");
  ++histogram_[stages_evaluated - 1];
  queue_.push_back(contribution);
  if (queue_.size() > horizon_) queue_.pop_front();

  const std::vector<double> window(queue_.begin(), queue_.end());
  const double q = mil::noisy_or(window);
  if (q >= threshold_ && (!last_event_ms_ || time_ms - *last_event_ms_ >= refractory_ms_)) {
    DetectionEvent e{time_ms, q, histogram_};
    histogram_ = {};
    queue_.clear();
    last_event_ms_ = time_ms;
    return e;
  }
  return std::nullopt;
}

double window_contribution(const WindowDecision& d, std::size_t n_stages) {
  return static_cast<std::size_t>(d.stages_evaluated) < n_stages ? 0.0 : d.probability;
}

StreamDetector::StreamDetector(const CascadeModel& cascade, StreamConfig cfg,
                               const FeatureExtractor& fx)
    : cascade_(cascade),
      fx_(fx),
      agg_((cfg.validate(), cfg.detection_threshold.value_or(cascade.detection_threshold)),
           cfg.horizon_ticks, cfg.refractory_ms) {
  KWS_REQUIRE(!cascade.stages.empty() && cascade.stages.size() <= kMaxStages,
              "cascade must have 1 to 3 stages");
  const auto& fc = fx.config();
  window_samples_ = static_cast<std::size_t>(fc.window_samples());
  stride_ = static_cast<std::size_t>(fc.frame_stride);
  frame_length_ = static_cast<std::size_t>(fc.frame_length);
  frames_per_window_ = static_cast<std::size_t>(fc.frames_per_window());
  coeffs_ = static_cast<std::size_t>(fc.n_coeffs);
  mfcc_ring_.resize(frames_per_window_ * coeffs_);
  plp_ring_.resize(frames_per_window_ * coeffs_);
  mfcc_window_.resize(frames_per_window_ * coeffs_);
  plp_window_.resize(frames_per_window_ * coeffs_);
  frame_.resize(frame_length_);
}

void StreamDetector::push_audio(std::span<const double> samples) {
  buffer_.insert(buffer_.end(), samples.begin(), samples.end());
  total_pushed_ += samples.size();

  // Keep the trailing 500 ms and every sample of frames not yet analysed.
  const std::uint64_t trailing =
      total_pushed_ > window_samples_ ? total_pushed_ - window_samples_ : 0;
  const std::uint64_t keep_from = std::min<std::uint64_t>(frames_done_ * stride_, trailing);
  if (keep_from > base_) {
    head_ += keep_from - base_;
    base_ = keep_from;
  }
  if (head_ > 4 * window_samples_) {
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(head_));
    head_ = 0;
  }
}

double StreamDetector::sample_at(std::uint64_t absolute) const {
  return buffer_[head_ + (absolute - base_)];
}

bool StreamDetector::can_tick() const {
  return total_pushed_ >= next_tick_ * stride_ + window_samples_;
}

void StreamDetector::compute_frames_through(std::uint64_t last) {
  for (; frames_done_ <= last; ++frames_done_) {
    const std::uint64_t start = frames_done_ * stride_;
    for (std::size_t i = 0; i < frame_length_; ++i) frame_[i] = sample_at(start + i);
    const std::size_t slot = (frames_done_ % frames_per_window_) * coeffs_;
    fx_.compute_frame(frame_, std::span(mfcc_ring_).subspan(slot, coeffs_),
                      std::span(plp_ring_).subspan(slot, coeffs_));
  }
}

std::optional<DetectionEvent> StreamDetector::tick() {
  if (!can_tick()) {
    throw PreconditionError("tick before 500 ms of audio is available (warm-up)");
  }
  const std::uint64_t n = next_tick_;
  compute_frames_through(n + frames_per_window_ - 1);
  for (std::size_t f = 0; f < frames_per_window_; ++f) {
    const std::size_t slot = ((n + f) % frames_per_window_) * coeffs_;
    std::copy_n(mfcc_ring_.begin() + static_cast<std::ptrdiff_t>(slot), coeffs_,
                mfcc_window_.begin() + static_cast<std::ptrdiff_t>(f * coeffs_));
    std::copy_n(plp_ring_.begin() + static_cast<std::ptrdiff_t>(slot), coeffs_,
                plp_window_.begin() + static_cast<std::ptrdiff_t>(f * coeffs_));
  }
  const auto d = classify_window(cascade_, {mfcc_window_, plp_window_});
  ++exits_[d.stages_evaluated - 1];
  ++next_tick_;
  const auto time_ms = static_cast<std::int64_t>((n * stride_ + window_samples_) * 1000 /
                                                 static_cast<std::uint64_t>(fx_.config().sample_rate_hz));
  return agg_.push(window_contribution(d, cascade_.stages.size()), d.stages_evaluated, time_ms);
}

std::vector<DetectionEvent> run_file(const AudioClip& clip, const CascadeModel& cascade,
                                     const StreamConfig& cfg) {
  const auto& fc = default_extractor().config();
  if (clip.sample_rate_hz != fc.sample_rate_hz) {
    throw ValidationError("run_file requires 8 kHz audio");
  }
  if (clip.samples.size() < static_cast<std::size_t>(fc.window_samples())) {
    throw ValidationError("clip " + clip.id + " is shorter than one 500 ms window");
  }
  StreamDetector det(cascade, cfg);
  std::vector<DetectionEvent> events;
  const std::span<const double> all(clip.samples);
  const auto step = static_cast<std::size_t>(fc.frame_stride);
  for (std::size_t pos = 0; pos < all.size(); pos += step) {
    det.push_audio(all.subspan(pos, std::min(step, all.size() - pos)));
    while (det.can_tick()) {
      if (auto e = det.tick()) events.push_back(*e);
    }
  }
  return events;
}

void write_event_header(std::ostream& out) {
  out << "time_ms,confidence,stage1_exits,stage2_exits,stage3_exits\n";
}

void write_event(std::ostream& out, const DetectionEvent& e) {
  out << e.time_ms << ',' << text::format_double(e.confidence) << ','
      << e.stages_histogram[0] << ',' << e.stages_histogram[1] << ','
      << e.stages_histogram[2] << '\n';
}

}  // namespace kws
