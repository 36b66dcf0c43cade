#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "kws/audio_io.hpp"
#include "kws/features.hpp"
#include "kws/nn.hpp"

namespace kws::mil {

/// Keyword span inside a clip, in milliseconds, half-open [start, end).
struct Annotation {
  std::string clip_id;
  int start_ms = 0;
  int end_ms = 0;
  std::string label = "keyword";

  int duration_ms() const { return end_ms - start_ms; }
};

enum class BagLabel { kNegative = 0, kPositive = 1 };

/// Consecutive windows on the 10 ms grid sharing one label. Windows are
/// addressed by grid index: window i starts at i * 10 ms of the clip.
struct Bag {
  std::string clip_id;
  int span_start_ms = 0;
  int span_end_ms = 0;
  std::size_t first_window = 0;
  std::size_t window_count = 0;
  BagLabel label = BagLabel::kNegative;

  int window_start_ms(std::size_t k, int stride_ms = 10) const {
    return static_cast<int>(first_window + k) * stride_ms;
  }
};

/// q = 1 - prod(1 - p_i), accumulated as a sum of log(1 - p_i).
double noisy_or(std::span<const double> probs);

/// dq/dp_i = prod_{j != i} (1 - p_j) from prefix/suffix log sums; no
/// division by (1 - p_i).
std::vector<double> noisy_or_grad(std::span<const double> probs);

struct BagLoss {
  double loss = 0.0;
  std::vector<double> dprobs;  // dL/dp_i
};

/// BCE of the bag label against noisy_or(probs).
BagLoss bag_loss_grad(std::span<const double> probs, BagLabel label);

struct BagConfig {
  int window_ms = 500;
  int stride_ms = 10;
  int negative_bag_ms = 1000;
  int min_span_ms = 100;
};

/// Positive bag per annotation (windows whose centre lies in the span) and
/// negative bags tiling the keyword-free remainder in negative_bag_ms chunks.
std::vector<Bag> make_bags(const AudioClip& clip, std::span<const Annotation> annotations,
                           const BagConfig& cfg = {});

/// Resolves a bag's windows against the clip's frame features.
std::vector<FeatureWindow> materialize(const Bag& bag, const ClipFeatures& features);

/// Training unit: the network inputs of each window in a bag, and the label.
struct MilItem {
  std::vector<std::span<const double>> windows;
  double label = 0.0;
};

/// Mean bag loss over the items.
double mil_loss(const nn::DnnModel& model, std::span<const MilItem> items);

/// Gradient of mil_loss.
nn::Gradient mil_grad(const nn::DnnModel& model, std::span<const MilItem> items);

/// SGD with momentum on bag-level loss. Mini-batches hold batch_size bags.
/// With window_level set, every window is trained as its own singleton bag
/// carrying its bag's label.
nn::DnnModel train_mil(nn::DnnModel model, std::span<const MilItem> items,
                       const nn::TrainConfig& cfg, bool window_level = false,
                       const nn::EpochCallback& on_epoch = {});

/// CSV `clip_id,start_ms,end_ms,label`.
std::vector<Annotation> read_annotations(std::istream& in);
void write_annotations(std::ostream& out, std::span<const Annotation> annotations);

}  // namespace kws::mil
