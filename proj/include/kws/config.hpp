#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "kws/cascade.hpp"
#include "kws/corpus.hpp"
#include "kws/eval.hpp"
#include "kws/features.hpp"
#include "kws/stream.hpp"

namespace kws {

/// Every tunable of the pipeline as one flat record. Loaded from `key=value`
/// text; command-line flags override individual keys afterwards.
struct Config {
  // features
  int window_ms = 500;
  int stride_ms = 10;
  int n_coeffs = 13;

  // cascade training
  int stages = 3;
  Representation repr = Representation::kBoth;
  int first_stage_ratio = 100;
  int later_stage_ratio = 2;
  double pass_rate = 0.995;
  double calibration_fraction = 0.2;  // train speakers held out for calibration
  double detection_threshold = 0.95;
  double min_mining_fraction = 0.5;
  bool window_level_labels = false;
  std::vector<int> hidden = {128, 128};
  double learning_rate = 0.01;
  double momentum = 0.9;
  int batch_size = 64;
  int epochs = 10;
  std::uint64_t train_seed = 1;

  // streaming
  int horizon_ticks = 50;
  int refractory_ms = 1000;

  // evaluation
  std::string thresholds = "101";  // point count, or comma-separated values
  int tolerance_ms = eval::kDefaultToleranceMs;
  double min_negative_hours = 0.5;

  // corpus
  int speakers = 20;
  int utterances = 30;
  double neg_hours = 4.0;
  std::uint64_t corpus_seed = 1;

  /// Sets one key; unknown keys are validation errors.
  void set(std::string_view key, std::string_view value);

  /// Checks every field against the owning module's preconditions.
  void validate() const;

  FeatureConfig feature_config() const;
  CascadeConfig cascade_config() const;
  StreamConfig stream_config() const;
  eval::SweepOptions sweep_options() const;
  corpus::SynthParams synth_params() const;
  std::vector<double> threshold_list() const;
};

/// Parses `key=value` lines; `#` starts a comment.
Config parse_config(std::istream& in, Config base = {});
Config load_config(const std::filesystem::path& path, Config base = {});
void write_config(std::ostream& out, const Config& cfg);

}  // namespace kws
