#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kws/cascade.hpp"
#include "kws/mil.hpp"
#include "kws/stream.hpp"

namespace kws::eval {

struct RocPoint {
  double threshold = 0.0;
  double fnr = 0.0;
  double fp_per_hour = 0.0;
  std::size_t hits = 0;
  std::size_t misses = 0;
  std::size_t spurious = 0;
  double neg_hours = 0.0;
};

struct MatchResult {
  std::size_t hits = 0;
  std::size_t misses = 0;
  std::size_t spurious = 0;             // events on keyword-free clips
  std::size_t unmatched_on_positive = 0;  // excluded from FP/hr

  bool operator==(const MatchResult&) const = default;
};

inline constexpr int kDefaultToleranceMs = 750;

/// An annotation is hit when an event falls in [start, end + tolerance].
/// Each event claims at most one annotation, the earliest unmatched one.
/// With no annotations every event is spurious.
MatchResult match_events(std::span<const DetectionEvent> events,
                         std::span<const mil::Annotation> annotations,
                         int tolerance_ms = kDefaultToleranceMs);

double fp_per_hour(std::size_t spurious, double hours);

/// Per-tick window contributions for one clip under one cascade.
struct ClipTrace {
  std::vector<double> contribution;
  std::vector<std::uint8_t> stages;
  std::vector<double> stage1_score;
  double duration_ms = 0.0;
};

ClipTrace trace_clip(const CascadeModel& cascade, const ClipFeatures& features,
                     double duration_ms);

/// Runs the aggregator over a cached trace; identical to streaming the clip.
std::vector<DetectionEvent> replay(const ClipTrace& trace, double detection_threshold,
                                   const StreamConfig& cfg = {});

struct EvalClip {
  const ClipFeatures* features = nullptr;
  double duration_ms = 0.0;
  std::vector<mil::Annotation> annotations;  // empty for keyword-free clips
};

struct SweepOptions {
  StreamConfig stream;
  int tolerance_ms = kDefaultToleranceMs;
  double min_negative_hours = 0.5;
};

/// Traces every clip once, then replays aggregation per threshold. Points are
/// returned in ascending threshold order.
std::vector<RocPoint> roc_sweep(const CascadeModel& cascade, std::span<const EvalClip> positives,
                                std::span<const EvalClip> negatives,
                                std::vector<double> thresholds, const SweepOptions& opt = {});

/// Same, over precomputed traces.
std::vector<RocPoint> roc_from_traces(std::span<const ClipTrace> pos_traces,
                                      std::span<const EvalClip> positives,
                                      std::span<const ClipTrace> neg_traces,
                                      std::span<const EvalClip> negatives,
                                      std::vector<double> thresholds,
                                      const SweepOptions& opt = {});

/// Evenly spaced thresholds in (0, 1]. Zero is left out: noisy-or is always
/// >= 0, so that point fires on every refractory period.
std::vector<double> threshold_grid(int points);

/// Lowest FP/hr among operating points with FNR <= fnr; nullopt when the
/// curve never gets that low.
std::optional<double> fp_at_fnr(std::span<const RocPoint> roc, double fnr);

/// FNR grid shared by several curves: the intersection of their FNR ranges,
/// cut off where every curve has reached zero false positives (beyond that
/// point all curves tie at zero).
struct FnrGrid {
  std::vector<double> points;
  bool restricted = false;
};

FnrGrid common_fnr_grid(std::span<const std::vector<RocPoint>> rocs, int points = 21);

struct DominanceRow {
  double fnr = 0.0;
  double fp_a = 0.0;
  double fp_b = 0.0;
  char winner = '=';  // 'A', 'B' or '='
};

struct DominanceReport {
  std::vector<DominanceRow> rows;
  double a_share = 0.0;  // ties count half
  double b_share = 0.0;
  double a_strict = 0.0;  // fraction of grid where A is strictly lower
  double b_strict = 0.0;
  bool restricted = false;
};

DominanceReport compare_models(std::span<const RocPoint> roc_a,
                               std::span<const RocPoint> roc_b, int grid_points = 21);

/// CSV `threshold,fnr,fp_per_hour,hits,misses,spurious,neg_hours`.
void write_roc_csv(std::ostream& out, std::span<const RocPoint> roc);
std::vector<RocPoint> read_roc_csv(std::istream& in);

/// CSV keyed by FNR grid value followed by `#` summary lines.
void write_dominance_report(std::ostream& out, const DominanceReport& r);

}  // namespace kws::eval
