#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "kws/audio_io.hpp"
#include "kws/cascade.hpp"
#include "kws/eval.hpp"
#include "kws/mil.hpp"

namespace kws::corpus {

enum class Split { kUnassigned, kTrain, kEval };

std::string_view to_string(Split s);
Split parse_split(std::string_view s);

struct ManifestEntry {
  std::string path;  // relative to the corpus directory
  std::string speaker_id;
  Split split = Split::kUnassigned;
  std::vector<mil::Annotation> annotations;

  std::string clip_id() const;
  bool keyword_free() const { return annotations.empty(); }
};

struct CorpusManifest {
  std::vector<ManifestEntry> entries;
  std::uint64_t seed = 0;
};

/// Manifest plus the decoded audio, index-aligned with entries.
struct Corpus {
  CorpusManifest manifest;
  std::vector<AudioClip> clips;
};

struct SynthParams {
  int n_speakers = 20;
  int utterances_per_speaker = 30;
  double neg_hours = 4.0;
  std::uint64_t seed = 1;
  int negative_sources = 20;   // background environments, split like speakers
  double negative_clip_s = 30.0;
  double min_snr_db = 5.0;
  double max_snr_db = 20.0;
  int min_keyword_ms = 300;
  int max_keyword_ms = 900;

  void validate() const;
};

/// Deterministic synthetic corpus. Each speaker is a seeded voice (pitch,
/// formant scale, speaking rate); each positive clip holds one two-syllable
/// keyword contour in noise. Keyword-free clips mix background noise,
/// babble-like syllables, single keyword syllables and silence. The result
/// is already split.
Corpus synth_corpus(const SynthParams& p);

/// Seeded shuffle of speaker ids; the first round(train_fraction * n) go to
/// train. Keyword-free background sources are split the same way as a
/// separate pool.
CorpusManifest stratified_split(CorpusManifest manifest, double train_fraction,
                                std::uint64_t seed);

/// Uniform sample without replacement of window starts on the 10 ms grid
/// across the split's keyword-free clips.
std::vector<FeatureWindow> sample_negative_windows(const Corpus& corpus, Split split,
                                                   std::size_t count, std::uint64_t seed);

/// Writes audio/*.wav, manifest.csv, annotations.csv and corpus.cfg.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

/// Manifest CSV `path,speaker_id,split`.
void write_manifest_csv(std::ostream& out, const CorpusManifest& m);

/// Features for every clip of a split, grouped for training and evaluation.
struct SplitFeatures {
  std::vector<ClipFeatures> positive_clips;
  std::vector<std::vector<mil::Annotation>> positive_annotations;
  std::vector<double> positive_duration_ms;
  std::vector<ClipFeatures> negative_clips;
  std::vector<double> negative_duration_ms;
};

SplitFeatures extract_split(const Corpus& corpus, Split split);

/// Positive bags plus the keyword-free repository, as cascade training input.
/// A seeded calibration_fraction of the split's speakers is held out: their
/// bags only calibrate stage thresholds.
TrainingSet make_training_set(SplitFeatures features, const Corpus& corpus, Split split,
                              double calibration_fraction = 0.0);

struct EvalSet {
  std::vector<eval::EvalClip> positives;
  std::vector<eval::EvalClip> negatives;
};

/// Views into `features`, which must outlive the result.
EvalSet make_eval_set(const SplitFeatures& features);

}  // namespace kws::corpus
