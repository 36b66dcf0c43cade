#include <doctest.h>

#include <set>
#include <sstream>

#include "kws/corpus.hpp"
#include "kws/errors.hpp"
#include "tmpdir.hpp"

using namespace kws;
using corpus::Split;

namespace {

corpus::CorpusManifest speakers(int n) {
  corpus::CorpusManifest m;
  for (int s = 0; s < n; ++s) {
    for (int u = 0; u < 3; ++u) {
      const std::string id = "s" + std::to_string(s) + "_" + std::to_string(u);
      m.entries.push_back({id + ".wav", "s" + std::to_string(s), Split::kUnassigned,
                           {{id, 100, 500}}});
    }
  }
  return m;
}

corpus::SynthParams small_params() {
  corpus::SynthParams p;
  p.n_speakers = 10;
  p.utterances_per_speaker = 2;
  p.negative_sources = 10;
  p.neg_hours = 0.05;
  p.seed = 17;
  return p;
}

const corpus::Corpus& small_corpus() {
  static const auto c = corpus::synth_corpus(small_params());
  return c;
}

}  // namespace

TEST_CASE("speaker split") {
  const auto m = corpus::stratified_split(speakers(10), 0.8, 1);
  std::set<std::string> train, test;
  for (const auto& e : m.entries) (e.split == Split::kTrain ? train : test).insert(e.speaker_id);
  CHECK(train.size() == 8);
  CHECK(test.size() == 2);

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = corpus::stratified_split(speakers(12), 0.8, seed);
    std::set<std::string> a, b;
    for (const auto& e : s.entries) (e.split == Split::kTrain ? a : b).insert(e.speaker_id);
    for (const auto& id : a) CHECK(b.count(id) == 0);
  }
  CHECK_THROWS_AS(corpus::stratified_split(speakers(5), 0.8, 1), ValidationError);
}

TEST_CASE("synthetic corpus contract") {
  const auto& c = small_corpus();
  REQUIRE(c.clips.size() == c.manifest.entries.size());
  int positives = 0;
  for (std::size_t i = 0; i < c.clips.size(); ++i) {
    const auto& e = c.manifest.entries[i];
    CHECK(e.split != Split::kUnassigned);
    CHECK(c.clips[i].sample_rate_hz == 8000);
    CHECK(c.clips[i].id == e.clip_id());
    if (e.keyword_free()) continue;
    ++positives;
    REQUIRE(e.annotations.size() == 1);
    const auto& a = e.annotations[0];
    CHECK(a.duration_ms() >= 300);
    CHECK(a.duration_ms() <= 900);
    CHECK(a.end_ms <= c.clips[i].duration_ms());
  }
  CHECK(positives == 20);

  const auto again = corpus::synth_corpus(small_params());
  bool same = again.clips.size() == c.clips.size();
  for (std::size_t i = 0; same && i < c.clips.size(); ++i) same = again.clips[i].samples == c.clips[i].samples;
  CHECK(same);
}

TEST_CASE("corpus directory round trip") {
  const auto& c = small_corpus();
  TempDir dir;
  corpus::write_corpus(c, dir.path());
  const auto back = corpus::load_corpus(dir.path());
  REQUIRE(back.clips.size() == c.clips.size());
  CHECK(back.manifest.seed == c.manifest.seed);
  for (std::size_t i = 0; i < c.clips.size(); ++i) {
    CHECK(back.clips[i].samples == c.clips[i].samples);
    CHECK(back.manifest.entries[i].split == c.manifest.entries[i].split);
    CHECK(back.manifest.entries[i].annotations.size() == c.manifest.entries[i].annotations.size());
  }
  CHECK_THROWS_AS(corpus::load_corpus(dir / "nope"), IoError);
}

TEST_CASE("negative window sampling") {
  const auto& c = small_corpus();
  const auto a = corpus::sample_negative_windows(c, Split::kTrain, 25, 3);
  const auto b = corpus::sample_negative_windows(c, Split::kTrain, 25, 3);
  REQUIRE(a.size() == 25);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].origin.clip_id == b[i].origin.clip_id);
    CHECK(a[i].origin.start_ms == b[i].origin.start_ms);
    CHECK(a[i].origin.clip_id.rfind("neg_", 0) == 0);
  }
  CHECK_THROWS_AS(corpus::sample_negative_windows(c, Split::kEval, 100000000, 3), ValidationError);
}

TEST_CASE("training set holds out calibration speakers") {
  const auto& c = small_corpus();
  const auto set = corpus::make_training_set(corpus::extract_split(c, Split::kTrain), c,
                                             Split::kTrain, 0.25);
  CHECK(!set.positive_bags.empty());
  CHECK(!set.calibration_bags.empty());
  CHECK(!set.negative_repository.empty());
  std::set<std::string> train_ids, cal_ids;
  for (const auto& b : set.positive_bags) train_ids.insert(b.clip_id.substr(0, 9));
  for (const auto& b : set.calibration_bags) cal_ids.insert(b.clip_id.substr(0, 9));
  for (const auto& id : cal_ids) CHECK(train_ids.count(id) == 0);
  CHECK(cal_ids.size() == 2);

  const auto eval_feats = corpus::extract_split(c, Split::kEval);
  const auto es = corpus::make_eval_set(eval_feats);
  CHECK(es.positives.size() == 4);
  for (const auto& p : es.positives) CHECK(p.annotations.size() == 1);
  for (const auto& n : es.negatives) CHECK(n.annotations.empty());
}

TEST_CASE("manifest CSV") {
  std::ostringstream ss;
  corpus::write_manifest_csv(ss, corpus::stratified_split(speakers(5 + 5), 0.8, 2));
  CHECK(ss.str().rfind("path,speaker_id,split\n", 0) == 0);
  CHECK(corpus::parse_split("eval") == Split::kEval);
}
