#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kws/features.hpp"
#include "kws/mil.hpp"
#include "kws/nn.hpp"

namespace kws {

enum class Representation { kMfcc, kPlp, kBoth };

std::string_view to_string(Representation r);
Representation parse_representation(std::string_view s);

/// One ensemble stage. Nets for representations the cascade does not use are
/// absent.
struct CascadeStage {
  std::optional<nn::DnnModel> mfcc_net;
  std::optional<nn::DnnModel> plp_net;
  double pass_threshold = 0.0;
};

struct CascadeModel {
  Representation repr = Representation::kBoth;
  std::vector<CascadeStage> stages;
  double detection_threshold = 0.95;

  /// First n stages as a standalone cascade.
  CascadeModel prefix(std::size_t n) const;
};

/// Model average of the stage's nets.
double score_stage(const CascadeStage& stage, const WindowView& w);

struct WindowDecision {
  double probability = 0.0;
  int stages_evaluated = 0;
  bool passed_all = false;  // score >= pass_threshold at every stage
};

/// Evaluates stages in order and stops at the first stage whose score falls
/// below its pass threshold.
WindowDecision classify_window(const CascadeModel& cascade, const WindowView& w);

/// Largest t such that at least target_pass_rate of the scores are >= t.
double calibrate_threshold(std::span<const double> bag_max_scores, double target_pass_rate);

/// Scores every window of each bag with the stage and calibrates on the
/// per-bag maximum. `features` is indexed by the bag's clip. With a prefix,
/// only windows the prefix passes count and bags with none are left out, so
/// the pass rate is conditional on reaching the stage.
double calibrate_threshold(const CascadeStage& stage, std::span<const mil::Bag> positive_bags,
                           std::span<const ClipFeatures> features,
                           std::span<const std::size_t> bag_clip_index,
                           double target_pass_rate, const CascadeModel* prefix = nullptr);

/// Indices of the bag's windows that pass every stage of the prefix (all of
/// them when prefix is null).
std::vector<std::size_t> surviving_windows(const CascadeModel* prefix, const mil::Bag& bag,
                                           const ClipFeatures& clip);

/// Window of a clip in a repository.
struct WindowRef {
  std::uint32_t clip = 0;
  std::uint32_t window = 0;

  auto operator<=>(const WindowRef&) const = default;
};

/// Uniform sample without replacement of `count` windows from all windows in
/// the repository, returned in (clip, window) order.
std::vector<WindowRef> sample_windows(std::span<const ClipFeatures> repository,
                                      std::size_t count, std::uint64_t seed);

struct MiningResult {
  std::vector<WindowRef> windows;
  std::size_t scanned = 0;
  bool shortfall = false;
};

/// Windows of keyword-free audio that pass every stage of the prefix. Scan
/// order is (clip, offset); when scan_seed is set the scan instead follows a
/// seeded permutation of all windows, so a small `needed` still draws from
/// the whole repository.
MiningResult mine_hard_negatives(const CascadeModel& prefix,
                                 std::span<const ClipFeatures> repository, std::size_t needed,
                                 std::optional<std::uint64_t> scan_seed = std::nullopt);

/// Convenience form over raw audio.
std::vector<FeatureWindow> mine_hard_negatives(const CascadeModel& prefix,
                                               std::span<const AudioClip> repository,
                                               std::size_t needed);

struct CascadeConfig {
  int stages = 3;
  Representation repr = Representation::kBoth;
  int first_stage_ratio = 100;  // negative windows per positive example
  int later_stage_ratio = 2;
  double target_pass_rate = 0.995;
  double detection_threshold = 0.95;
  double min_mining_fraction = 0.5;
  bool window_level_labels = false;
  std::vector<int> hidden = {128, 128};
  nn::TrainConfig train;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Inputs for cascade training, all at the analysis rate.
struct TrainingSet {
  std::vector<ClipFeatures> positive_clips;
  std::vector<mil::Bag> positive_bags;
  std::vector<std::size_t> bag_clip;  // index into positive_clips per bag
  // Held-out bags for pass-threshold calibration; when empty the training
  // bags are used.
  std::vector<mil::Bag> calibration_bags;
  std::vector<std::size_t> calibration_bag_clip;
  std::vector<ClipFeatures> negative_repository;
};

struct TrainingLogRow {
  int stage = 0;  // 1-based
  Representation repr = Representation::kMfcc;
  int epoch = 0;
  double loss = 0.0;
  std::size_t pos = 0;  // positive examples (bags)
  std::size_t neg = 0;  // negative windows
};

/// Stage 1 on random negatives at first_stage_ratio, later stages on hard
/// negatives mined through the current prefix at later_stage_ratio. Each
/// stage's positive bags keep only the windows the prefix passes.
CascadeModel train_cascade(const TrainingSet& data, const CascadeConfig& cfg,
                           std::vector<TrainingLogRow>* log = nullptr,
                           std::ostream* diagnostics = nullptr);

/// CSV `stage,repr,epoch,loss,pos,neg`.
void write_training_log(std::ostream& out, std::span<const TrainingLogRow> rows);

std::string save_cascade(const CascadeModel& model);
CascadeModel load_cascade(std::string_view text);

}  // namespace kws
