#include <doctest.h>

#include <sstream>
#include <vector>

#include "kws/errors.hpp"
#include "kws/eval.hpp"
#include "kws/rng.hpp"
#include "support.hpp"

using namespace kws;
using eval::RocPoint;

namespace {

DetectionEvent at(std::int64_t ms) { return {ms, 0.99, {}}; }

eval::ClipTrace flat_trace(std::size_t ticks, double p) {
  eval::ClipTrace t;
  t.contribution.assign(ticks, p);
  t.stages.assign(ticks, 1);
  t.stage1_score.assign(ticks, p);
  t.duration_ms = 500.0 + 10.0 * static_cast<double>(ticks - 1);
  return t;
}

std::vector<RocPoint> curve(std::vector<std::pair<double, double>> fnr_fp) {
  std::vector<RocPoint> r;
  double th = 0.1;
  for (auto [f, fp] : fnr_fp) {
    RocPoint p;
    p.threshold = th;
    p.fnr = f;
    p.fp_per_hour = fp;
    p.neg_hours = 1.0;
    r.push_back(p);
    th += 0.1;
  }
  return r;
}

}  // namespace

TEST_CASE("event matching") {
  const std::vector<mil::Annotation> one{{"c", 1000, 1500}};
  const std::vector<DetectionEvent> inside{at(1200)};
  CHECK(eval::match_events(inside, one) == eval::MatchResult{1, 0, 0, 0});
  CHECK(eval::match_events({}, one) == eval::MatchResult{0, 1, 0, 0});
  const std::vector<DetectionEvent> two{at(700), at(3000)};
  CHECK(eval::match_events(two, {}) == eval::MatchResult{0, 0, 2, 0});
  const std::vector<DetectionEvent> late{at(2250), at(2251)};
  CHECK(eval::match_events(late, one).hits == 1);
  CHECK(eval::match_events(late, one).unmatched_on_positive == 1);
  CHECK(eval::fp_per_hour(3, 4.0) == 0.75);
}

TEST_CASE("sweep endpoints") {
  // One positive clip whose trace lights up around the keyword, and an hour
  // of low-level negatives.
  auto pos = flat_trace(300, 0.0);
  for (std::size_t i = 60; i < 80; ++i) pos.contribution[i] = 0.5;
  std::vector<eval::ClipTrace> neg;
  for (int i = 0; i < 120; ++i) neg.push_back(flat_trace(2951, 0.02));
  std::vector<eval::EvalClip> pclips(1), nclips(neg.size());
  pclips[0].duration_ms = pos.duration_ms;
  pclips[0].annotations = {{"p", 900, 1300}};
  for (std::size_t i = 0; i < neg.size(); ++i) nclips[i].duration_ms = neg[i].duration_ms;

  const std::vector<eval::ClipTrace> ptr{pos};
  const auto roc = eval::roc_from_traces(ptr, pclips, neg, nclips, {1.0 + 1e-9, 0.3, 0.9, 0.0});
  REQUIRE(roc.size() == 4);
  CHECK(roc.front().threshold == 0.0);
  CHECK(roc.back().fnr == 1.0);
  CHECK(roc.back().fp_per_hour == 0.0);
  CHECK(roc.front().fnr == 0.0);
  for (std::size_t i = 1; i < roc.size(); ++i) {
    CHECK(roc[i].fnr >= roc[i - 1].fnr);
    CHECK(roc[i].fp_per_hour <= roc[i - 1].fp_per_hour);
  }
  CHECK(roc[0].neg_hours == doctest::Approx(1.0).epsilon(1e-3));

  std::vector<eval::EvalClip> little(1);
  little[0].duration_ms = 1000.0;
  const std::vector<eval::ClipTrace> one_neg{flat_trace(51, 0.0)};
  CHECK_THROWS_AS(eval::roc_from_traces(ptr, pclips, one_neg, little, {0.5}), ValidationError);
}

TEST_CASE("threshold grid") {
  const auto g = eval::threshold_grid(4);
  CHECK(g == std::vector<double>{0.25, 0.5, 0.75, 1.0});
  CHECK(eval::threshold_grid(201).size() == 201);
  CHECK_THROWS_AS(eval::threshold_grid(0), ValidationError);
}

TEST_CASE("replay equals streaming") {
  Rng rng(4);
  const auto clip = testing::noise_clip(rng, 3.0, 0.1, "r");
  CascadeModel m;
  m.repr = Representation::kBoth;
  for (int s = 0; s < 2; ++s) {
    CascadeStage st;
    st.mfcc_net = testing::random_model(rng, {624, 4, 1});
    st.plp_net = testing::random_model(rng, {624, 4, 1});
    m.stages.push_back(st);
  }
  const ClipFeatures cf(clip, default_extractor());
  const auto trace = eval::trace_clip(m, cf, clip.duration_ms());
  CHECK(trace.contribution.size() == cf.window_count());
  for (double th : {0.2, 0.5, 0.8}) {
    StreamConfig sc;
    sc.detection_threshold = th;
    CHECK(eval::replay(trace, th) == run_file(clip, m, sc));
  }
}

TEST_CASE("dominance") {
  const auto a = curve({{0.0, 10}, {0.2, 5}, {0.5, 2}, {1.0, 0}});
  const auto same = eval::compare_models(a, a);
  CHECK(same.a_share == 0.5);
  CHECK(same.b_share == 0.5);
  CHECK(same.a_strict == 0.0);

  const auto better = curve({{0.0, 5}, {0.2, 2}, {0.5, 1}, {1.0, 0}});
  const auto r = eval::compare_models(better, a);
  // Both curves reach zero at FNR 1, the one tied point.
  CHECK(r.a_strict == doctest::Approx(20.0 / 21.0));
  CHECK(r.b_strict == 0.0);
  CHECK(r.rows.size() == 21);

  std::ostringstream ss;
  eval::write_dominance_report(ss, r);
  CHECK(ss.str().find("fnr") != std::string::npos);
}

TEST_CASE("common FNR grid and lookup") {
  const auto a = curve({{0.1, 4}, {0.4, 1}, {0.9, 0}});
  const auto b = curve({{0.2, 6}, {0.5, 2}, {0.8, 0}});
  const std::vector<std::vector<RocPoint>> both{a, b};
  const auto g = eval::common_fnr_grid(both, 5);
  CHECK(g.points.front() == doctest::Approx(0.2));
  CHECK(g.points.back() == doctest::Approx(0.8));
  CHECK(g.restricted);
  CHECK(eval::fp_at_fnr(a, 0.05) == std::nullopt);
  CHECK(*eval::fp_at_fnr(a, 0.5) == 1.0);
}

TEST_CASE("ROC CSV round trip") {
  auto r = curve({{0.0, 10.5}, {0.3, 1.25}});
  r[1].hits = 7;
  r[1].spurious = 3;
  std::stringstream ss;
  eval::write_roc_csv(ss, r);
  const auto back = eval::read_roc_csv(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[1].fp_per_hour == 1.25);
  CHECK(back[1].hits == 7);
  CHECK(back[1].spurious == 3);
  std::stringstream bad("threshold,fnr\n0.1,x\n");
  CHECK_THROWS_AS(eval::read_roc_csv(bad), FormatError);
}
