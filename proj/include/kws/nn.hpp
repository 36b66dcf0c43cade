#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kws::nn {

struct Layer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;
};

/// Per-feature standardization applied before the first layer.
struct Normalizer {
  std::vector<double> mean;
  std::vector<double> stddev;

  static Normalizer identity(int dim);
  /// Mean and standard deviation over the given inputs; zero-variance
  /// features get stddev 1.
  static Normalizer fit(std::span<const std::span<const double>> inputs);
};

/// Fully connected binary classifier: ReLU hidden layers, sigmoid output.
struct DnnModel {
  std::vector<int> dims;  // input, hidden..., 1
  std::uint64_t seed = 0;
  Normalizer norm;
  std::vector<Layer> layers;

  int input_dim() const { return dims.front(); }
};

inline const std::vector<int> kDefaultDims = {624, 128, 128, 1};

/// Xavier-uniform weights from a seeded PRNG, zero biases, identity
/// normalizer.
DnnModel init_model(std::uint64_t seed, const std::vector<int>& dims = kDefaultDims);

/// Output pre-activation.
double forward_logit(const DnnModel& model, std::span<const double> x);

/// Probability in (0, 1).
double forward(const DnnModel& model, std::span<const double> x);

double sigmoid(double z);

/// Same shape as the model's layers.
struct Gradient {
  std::vector<Layer> layers;

  static Gradient zeros_like(const DnnModel& model);
  void scale(double s);
  void add(const Gradient& other, double s = 1.0);
  double max_abs() const;
};

struct Example {
  std::span<const double> x;
  double label = 0.0;  // 0 or 1
};

inline constexpr double kProbClamp = 1e-12;

/// Binary cross-entropy with p clamped to [1e-12, 1 - 1e-12].
double bce(double label, double p);

/// Mean BCE of the model over the examples.
double mean_loss(const DnnModel& model, std::span<const Example> batch);

/// Gradient of mean BCE over a non-empty batch.
Gradient grad(const DnnModel& model, std::span<const Example> batch);

/// Batched forward/backward over a set of inputs. Keeps the activations of
/// the last forward call so callers can supply arbitrary output gradients
/// (used for bag-level losses).
class BatchPass {
 public:
  /// Returns probabilities, one per input column.
  const std::vector<double>& forward(const DnnModel& model,
                                     std::span<const std::span<const double>> inputs);
  const std::vector<double>& logits() const { return logits_; }

  /// Accumulates d(loss)/d(params) into g given d(loss)/d(logit) per input.
  void backward(const DnnModel& model, std::span<const double> dlogit, Gradient& g);

 private:
  std::vector<Eigen::MatrixXd> acts_;  // acts_[0] = normalized input
  std::vector<Eigen::MatrixXd> pre_;
  std::vector<double> probs_;
  std::vector<double> logits_;
};

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  int batch_size = 64;
  int epochs = 10;
  std::uint64_t seed = 1;

  void validate() const;
};

/// SGD with momentum. Holds velocity buffers across steps.
class SgdMomentum {
 public:
  SgdMomentum(const DnnModel& model, double learning_rate, double momentum);
  void step(DnnModel& model, const Gradient& g);

 private:
  double lr_;
  double mu_;
  Gradient velocity_;
};

/// Called after each epoch with (epoch index from 0, mean training loss).
using EpochCallback = std::function<void(int, double)>;

/// Window-level training on labeled examples with seeded mini-batch
/// shuffling. Refuses single-class data.
DnnModel train(DnnModel model, std::span<const Example> data, const TrainConfig& cfg,
               const EpochCallback& on_epoch = {});

/// Line-oriented text serialization; load(save(m)) is bit-exact.
std::string save(const DnnModel& model);
DnnModel load(std::string_view text);

bool bit_equal(const DnnModel& a, const DnnModel& b);

}  // namespace kws::nn
