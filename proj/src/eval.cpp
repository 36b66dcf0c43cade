#include "kws/eval.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "kws/errors.hpp"
#include "kws/text.hpp"

namespace kws::eval {

MatchResult match_events(std::span<const DetectionEvent> events,
                         std::span<const mil::Annotation> annotations, int tolerance_ms) {
  MatchResult r;
  if (annotations.empty()) {
    r.spurious = events.size();
    return r;
  }
  std::vector<const mil::Annotation*> order;
  for (const auto& a : annotations) order.push_back(&a);
  std::sort(order.begin(), order.end(),
            [](auto* a, auto* b) { return a->start_ms < b->start_ms; });
  std::vector<bool> hit(order.size(), false);
  for (const auto& e : events) {
    bool matched = false;
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (!hit[i] && e.time_ms >= order[i]->start_ms &&
          e.time_ms <= order[i]->end_ms + tolerance_ms) {
        hit[i] = true;
        matched = true;
        break;
      }
    }
    if (!matched) ++r.unmatched_on_positive;
  }
  r.hits = static_cast<std::size_t>(std::count(hit.begin(), hit.end(), true));
  r.misses = order.size() - r.hits;
  return r;
}

double fp_per_hour(std::size_t spurious, double hours) {
  KWS_REQUIRE(hours > 0.0, "negative audio duration must be positive");
  return static_cast<double>(spurious) / hours;
}

ClipTrace trace_clip(const CascadeModel& cascade, const ClipFeatures& features,
                     double duration_ms) {
  ClipTrace t;
  t.duration_ms = duration_ms;
  const auto n = features.window_count();
  t.contribution.resize(n);
  t.stages.resize(n);
  t.stage1_score.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto w = features.window(i);
    const auto d = classify_window(cascade, w);
    t.contribution[i] = window_contribution(d, cascade.stages.size());
    t.stages[i] = static_cast<std::uint8_t>(d.stages_evaluated);
    t.stage1_score[i] = d.stages_evaluated == 1 ? d.probability
                                                : score_stage(cascade.stages.front(), w);
  }
  return t;
}

std::vector<DetectionEvent> replay(const ClipTrace& trace, double detection_threshold,
                                   const StreamConfig& cfg) {
  cfg.validate();
  EventAggregator agg(detection_threshold, cfg.horizon_ticks, cfg.refractory_ms);
  const auto& fc = default_extractor().config();
  std::vector<DetectionEvent> events;
  for (std::size_t i = 0; i < trace.contribution.size(); ++i) {
    const auto time_ms = static_cast<std::int64_t>(i) * fc.stride_ms() + fc.window_ms;
    if (auto e = agg.push(trace.contribution[i], trace.stages[i], time_ms)) events.push_back(*e);
  }
  return events;
}

std::vector<RocPoint> roc_from_traces(std::span<const ClipTrace> pos_traces,
                                      std::span<const EvalClip> positives,
                                      std::span<const ClipTrace> neg_traces,
                                      std::span<const EvalClip> negatives,
                                      std::vector<double> thresholds, const SweepOptions& opt) {
  if (thresholds.empty()) throw ValidationError("threshold list is empty");
  KWS_REQUIRE(pos_traces.size() == positives.size() && neg_traces.size() == negatives.size(),
              "trace/clip count mismatch");
  double neg_ms = 0.0;
  for (const auto& c : negatives) neg_ms += c.duration_ms;
  const double neg_hours = neg_ms / 3.6e6;
  if (neg_hours < opt.min_negative_hours || neg_hours <= 0.0) {
    throw ValidationError("negative audio totals " + text::format_double(neg_hours * 60.0) +
                          " min; at least " +
                          text::format_double(opt.min_negative_hours * 60.0) +
                          " min needed for FP/hr");
  }
  std::sort(thresholds.begin(), thresholds.end());

  std::vector<RocPoint> roc;
  for (double th : thresholds) {
    RocPoint pt;
    pt.threshold = th;
    pt.neg_hours = neg_hours;
    for (std::size_t i = 0; i < positives.size(); ++i) {
      const auto ev = replay(pos_traces[i], th, opt.stream);
      const auto m = match_events(ev, positives[i].annotations, opt.tolerance_ms);
      pt.hits += m.hits;
      pt.misses += m.misses;
    }
    for (std::size_t i = 0; i < negatives.size(); ++i) {
      pt.spurious += replay(neg_traces[i], th, opt.stream).size();
    }
    const auto total = pt.hits + pt.misses;
    pt.fnr = total ? static_cast<double>(pt.misses) / static_cast<double>(total) : 0.0;
    pt.fp_per_hour = fp_per_hour(pt.spurious, neg_hours);
    roc.push_back(pt);
  }
  return roc;
}

std::vector<RocPoint> roc_sweep(const CascadeModel& cascade, std::span<const EvalClip> positives,
                                std::span<const EvalClip> negatives,
                                std::vector<double> thresholds, const SweepOptions& opt) {
  if (thresholds.empty()) throw ValidationError("threshold list is empty");
  std::vector<ClipTrace> pt, nt;
  for (const auto& c : positives) pt.push_back(trace_clip(cascade, *c.features, c.duration_ms));
  for (const auto& c : negatives) nt.push_back(trace_clip(cascade, *c.features, c.duration_ms));
  return roc_from_traces(pt, positives, nt, negatives, std::move(thresholds), opt);
}

std::vector<double> threshold_grid(int points) {
  if (points < 1) throw ValidationError("threshold grid needs at least 1 point");
  std::vector<double> g(points);
  for (int i = 0; i < points; ++i) g[i] = static_cast<double>(i + 1) / points;
  return g;
}

std::optional<double> fp_at_fnr(std::span<const RocPoint> roc, double fnr) {
  std::optional<double> best;
  for (const auto& p : roc) {
    if (p.fnr <= fnr + 1e-12 && (!best || p.fp_per_hour < *best)) best = p.fp_per_hour;
  }
  return best;
}

FnrGrid common_fnr_grid(std::span<const std::vector<RocPoint>> rocs, int points) {
  KWS_REQUIRE(!rocs.empty(), "no curves");
  KWS_REQUIRE(points >= 1, "grid needs at least one point");
  double lo = 0.0, hi = 1.0, zero_at = 0.0;
  bool first = true;
  FnrGrid g;
  for (const auto& roc : rocs) {
    if (roc.empty()) throw ValidationError("empty ROC curve");
    double mn = 1.0, mx = 0.0, z = 2.0;
    for (const auto& p : roc) {
      mn = std::min(mn, p.fnr);
      mx = std::max(mx, p.fnr);
      if (p.fp_per_hour == 0.0) z = std::min(z, p.fnr);
    }
    if (!first && (mn != lo || mx != hi)) g.restricted = true;
    lo = first ? mn : std::max(lo, mn);
    hi = first ? mx : std::min(hi, mx);
    zero_at = std::max(zero_at, z);
    first = false;
  }
  if (hi < lo) throw ValidationError("ROC curves have non-overlapping FNR ranges");
  if (zero_at < hi) {
    hi = std::max(lo, zero_at);
    g.restricted = true;
  }
  if (points == 1 || hi == lo) {
    g.points = {lo};
    return g;
  }
  for (int i = 0; i < points; ++i) g.points.push_back(lo + (hi - lo) * i / (points - 1));
  return g;
}

DominanceReport compare_models(std::span<const RocPoint> roc_a, std::span<const RocPoint> roc_b,
                               int grid_points) {
  const std::vector<std::vector<RocPoint>> both = {{roc_a.begin(), roc_a.end()},
                                                   {roc_b.begin(), roc_b.end()}};
  const auto grid = common_fnr_grid(both, grid_points);
  DominanceReport r;
  r.restricted = grid.restricted;
  double a_wins = 0, b_wins = 0, ties = 0;
  for (double x : grid.points) {
    DominanceRow row{x, *fp_at_fnr(roc_a, x), *fp_at_fnr(roc_b, x), '='};
    if (row.fp_a < row.fp_b) {
      row.winner = 'A';
      ++a_wins;
    } else if (row.fp_b < row.fp_a) {
      row.winner = 'B';
      ++b_wins;
    } else {
      ++ties;
    }
    r.rows.push_back(row);
  }
  const double n = static_cast<double>(r.rows.size());
  r.a_share = (a_wins + 0.5 * ties) / n;
  r.b_share = (b_wins + 0.5 * ties) / n;
  r.a_strict = a_wins / n;
  r.b_strict = b_wins / n;
  return r;
}

void write_roc_csv(std::ostream& out, std::span<const RocPoint> roc) {
  out << "threshold,fnr,fp_per_hour,hits,misses,spurious,neg_hours\n";
  for (const auto& p : roc) {
    out << text::format_double(p.threshold) << ',' << text::format_double(p.fnr) << ','
        << text::format_double(p.fp_per_hour) << ',' << p.hits << ',' << p.misses << ','
        << p.spurious << ',' << text::format_double(p.neg_hours) << '\n';
  }
}

std::vector<RocPoint> read_roc_csv(std::istream& in) {
  std::vector<RocPoint> roc;
  std::string line;
  if (!std::getline(in, line) || line.rfind("threshold,fnr,fp_per_hour", 0) != 0) {
    throw FormatError("missing ROC CSV header");
  }
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = text::split(line, ',');
    if (f.size() != 7) throw FormatError("ROC row needs 7 fields: " + line);
    roc.push_back({text::parse_double(f[0]), text::parse_double(f[1]), text::parse_double(f[2]),
                   text::parse_int<std::size_t>(f[3]), text::parse_int<std::size_t>(f[4]),
                   text::parse_int<std::size_t>(f[5]), text::parse_double(f[6])});
  }
  if (roc.empty()) throw FormatError("ROC CSV has no rows");
  return roc;
}

void write_dominance_report(std::ostream& out, const DominanceReport& r) {
  out << "fnr,fp_per_hour_a,fp_per_hour_b,dominant\n";
  for (const auto& row : r.rows) {
    out << text::format_double(row.fnr) << ',' << text::format_double(row.fp_a) << ','
        << text::format_double(row.fp_b) << ',' << row.winner << '\n';
  }
  out << "# A dominates on " << text::format_double(100.0 * r.a_share) << "% of the grid ("
      << text::format_double(100.0 * r.a_strict) << "% strictly)\n";
  out << "# B dominates on " << text::format_double(100.0 * r.b_share) << "% of the grid ("
      << text::format_double(100.0 * r.b_strict) << "% strictly)\n";
  if (r.restricted) out << "# grid restricted to the shared informative FNR range\n";
}

}  // namespace kws::eval
