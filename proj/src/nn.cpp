#include "kws/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "kws/errors.hpp"
#include "kws/rng.hpp"
#include "kws/text.hpp"

namespace kws::nn {

Normalizer Normalizer::identity(int dim) {
  return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
}

Normalizer Normalizer::fit(std::span<const std::span<const double>> inputs) {
  KWS_REQUIRE(!inputs.empty(), "cannot fit a normalizer on no data");
  const std::size_t dim = inputs.front().size();
  std::vector<double> mean(dim, 0.0), var(dim, 0.0);
  for (const auto& x : inputs) {
    KWS_REQUIRE(x.size() == dim, "inconsistent input dimensions");
    for (std::size_t i = 0; i < dim; ++i) mean[i] += x[i];
  }
  const double n = static_cast<double>(inputs.size());
  for (auto& m : mean) m /= n;
  for (const auto& x : inputs) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double d = x[i] - mean[i];
      var[i] += d * d;
    }
  }
  std::vector<double> sd(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    const double s = std::sqrt(var[i] / n);
    sd[i] = s > 1e-12 ? s : 1.0;
  }
  return {std::move(mean), std::move(sd)};
}

DnnModel init_model(std::uint64_t seed, const std::vector<int>& dims) {
  if (dims.size() < 2 || dims.back() != 1 ||
      std::any_of(dims.begin(), dims.end(), [](int d) { return d <= 0; })) {
    throw ValidationError("layer dims must be positive and end in a single output");
  }
  DnnModel m;
  m.dims = dims;
  m.seed = seed;
  m.norm = Normalizer::identity(dims.front());
  Rng rng(derive_seed(seed, 0, 0x6e6e));
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int in = dims[l], out = dims[l + 1];
    const double bound = std::sqrt(6.0 / (in + out));
    Layer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) layer.weights(r, c) = uniform(rng, -bound, bound);
    }
    m.layers.push_back(std::move(layer));
  }
  return m;
}

double sigmoid(double z) {
  constexpr double kLo = std::numeric_limits<double>::min();
  const double hi = std::nextafter(1.0, 0.0);
  const double p = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  return std::clamp(p, kLo, hi);
}

double forward_logit(const DnnModel& model, std::span<const double> x) {
  KWS_REQUIRE(x.size() == static_cast<std::size_t>(model.input_dim()),
              "input has " + std::to_string(x.size()) + " values, model expects " +
                  std::to_string(model.input_dim()));
  Eigen::VectorXd h(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    h[i] = (x[i] - model.norm.mean[i]) / model.norm.stddev[i];
  }
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    Eigen::VectorXd z = model.layers[l].weights * h + model.layers[l].bias;
    if (l + 1 < model.layers.size()) z = z.cwiseMax(0.0);
    h = std::move(z);
  }
  return h[0];
}

double forward(const DnnModel& model, std::span<const double> x) {
  return sigmoid(forward_logit(model, x));
}

Gradient Gradient::zeros_like(const DnnModel& model) {
  Gradient g;
  for (const auto& l : model.layers) {
    g.layers.push_back({Eigen::MatrixXd::Zero(l.weights.rows(), l.weights.cols()),
                        Eigen::VectorXd::Zero(l.bias.size())});
  }
  return g;
}

void Gradient::scale(double s) {
  for (auto& l : layers) {
    l.weights *= s;
    l.bias *= s;
  }
}

void Gradient::add(const Gradient& other, double s) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].weights += s * other.layers[i].weights;
    layers[i].bias += s * other.layers[i].bias;
  }
}

double Gradient::max_abs() const {
  double m = 0.0;
  for (const auto& l : layers) {
    m = std::max({m, l.weights.cwiseAbs().maxCoeff(), l.bias.cwiseAbs().maxCoeff()});
  }
  return m;
}

double bce(double label, double p) {
  p = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  return -(label * std::log(p) + (1.0 - label) * std::log(1.0 - p));
}

double mean_loss(const DnnModel& model, std::span<const Example> batch) {
  KWS_REQUIRE(!batch.empty(), "empty batch");
  double acc = 0.0;
  for (const auto& e : batch) acc += bce(e.label, forward(model, e.x));
  return acc / static_cast<double>(batch.size());
}

const std::vector<double>& BatchPass::forward(const DnnModel& model,
                                              std::span<const std::span<const double>> inputs) {
  const auto dim = static_cast<Eigen::Index>(model.input_dim());
  const auto n = static_cast<Eigen::Index>(inputs.size());
  const std::size_t depth = model.layers.size();
  acts_.resize(depth);
  pre_.resize(depth);

  auto& x = acts_[0];
  x.resize(dim, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto& in = inputs[c];
    KWS_REQUIRE(in.size() == static_cast<std::size_t>(dim), "input dimension mismatch");
    for (Eigen::Index i = 0; i < dim; ++i) {
      x(i, c) = (in[i] - model.norm.mean[i]) / model.norm.stddev[i];
    }
  }
  for (std::size_t l = 0; l < depth; ++l) {
    pre_[l].noalias() = model.layers[l].weights * acts_[l];
    pre_[l].colwise() += model.layers[l].bias;
    if (l + 1 < depth) acts_[l + 1] = pre_[l].cwiseMax(0.0);
  }
  logits_.resize(n);
  probs_.resize(n);
  for (Eigen::Index c = 0; c < n; ++c) {
    logits_[c] = pre_[depth - 1](0, c);
    probs_[c] = sigmoid(logits_[c]);
  }
  return probs_;
}

void BatchPass::backward(const DnnModel& model, std::span<const double> dlogit, Gradient& g) {
  const std::size_t depth = model.layers.size();
  KWS_REQUIRE(dlogit.size() == logits_.size(), "gradient length does not match batch");
  Eigen::MatrixXd delta = Eigen::Map<const Eigen::RowVectorXd>(
      dlogit.data(), static_cast<Eigen::Index>(dlogit.size()));
  for (std::size_t l = depth; l-- > 0;) {
    g.layers[l].weights.noalias() += delta * acts_[l].transpose();
    g.layers[l].bias += delta.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd back = model.layers[l].weights.transpose() * delta;
    delta = back.cwiseProduct((pre_[l - 1].array() > 0.0).cast<double>().matrix());
  }
}

Gradient grad(const DnnModel& model, std::span<const Example> batch) {
  KWS_REQUIRE(!batch.empty(), "grad requires a non-empty batch");
  std::vector<std::span<const double>> inputs;
  inputs.reserve(batch.size());
  for (const auto& e : batch) inputs.push_back(e.x);
  BatchPass pass;
  const auto& p = pass.forward(model, inputs);
  // d/dz of BCE through the sigmoid is p - y; the clamp only guards the
  // loss value.
  std::vector<double> dz(batch.size());
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) dz[i] = (p[i] - batch[i].label) * inv;
  auto g = Gradient::zeros_like(model);
  pass.backward(model, dz, g);
  return g;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !(momentum >= 0.0 && momentum < 1.0) || batch_size <= 0 ||
      epochs <= 0) {
    throw ValidationError("invalid training configuration");
  }
}

SgdMomentum::SgdMomentum(const DnnModel& model, double learning_rate, double momentum)
    : lr_(learning_rate), mu_(momentum), velocity_(Gradient::zeros_like(model)) {}

void SgdMomentum::step(DnnModel& model, const Gradient& g) {
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto& v = velocity_.layers[l];
    v.weights = mu_ * v.weights - lr_ * g.layers[l].weights;
    v.bias = mu_ * v.bias - lr_ * g.layers[l].bias;
    model.layers[l].weights += v.weights;
    model.layers[l].bias += v.bias;
  }
}

DnnModel train(DnnModel model, std::span<const Example> data, const TrainConfig& cfg,
               const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.empty()) throw ValidationError("training data is empty");
  bool has_pos = false, has_neg = false;
  for (const auto& e : data) {
    if (e.label != 0.0 && e.label != 1.0) throw ValidationError("labels must be 0 or 1");
    (e.label == 1.0 ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg) throw ValidationError("training data must contain both classes");

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(cfg.seed, 0, 0x7472));
  SgdMomentum opt(model, cfg.learning_rate, cfg.momentum);
  BatchPass pass;
  std::vector<std::span<const double>> inputs;
  std::vector<double> dz;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[uniform_index(rng, i)]);
    }
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      inputs.clear();
      for (std::size_t i = start; i < stop; ++i) inputs.push_back(data[order[i]].x);
      const auto& p = pass.forward(model, inputs);
      const double inv = 1.0 / static_cast<double>(stop - start);
      dz.resize(stop - start);
      for (std::size_t i = 0; i < dz.size(); ++i) {
        const double y = data[order[start + i]].label;
        loss_sum += bce(y, p[i]);
        dz[i] = (p[i] - y) * inv;
      }
      auto g = Gradient::zeros_like(model);
      pass.backward(model, dz, g);
      opt.step(model, g);
    }
    if (on_epoch) on_epoch(epoch, loss_sum / static_cast<double>(data.size()));
  }
  return model;
}

namespace {

void write_row(std::string& out, const double* v, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += text::format_double(v[i]);
  }
  out += '\n';
}

std::vector<double> read_values(std::span<const std::string_view> toks, std::size_t expect,
                                std::string_view what) {
  if (toks.size() != expect) {
    throw FormatError(std::string(what) + ": expected " + std::to_string(expect) +
                      " values, found " + std::to_string(toks.size()));
  }
  std::vector<double> v(expect);
  for (std::size_t i = 0; i < expect; ++i) {
    v[i] = text::parse_double(toks[i]);
    if (!std::isfinite(v[i])) throw FormatError(std::string(what) + ": non-finite value");
  }
  return v;
}

}  // namespace

std::string save(const DnnModel& model) {
  std::string out = "KWSNN v1\ndims";
  for (int d : model.dims) out += ' ' + std::to_string(d);
  out += "\nseed " + std::to_string(model.seed) + "\n";
  out += "norm mean ";
  write_row(out, model.norm.mean.data(), static_cast<Eigen::Index>(model.norm.mean.size()));
  out += "norm std ";
  write_row(out, model.norm.stddev.data(), static_cast<Eigen::Index>(model.norm.stddev.size()));
  for (const auto& l : model.layers) {
    out += "W " + std::to_string(l.weights.rows()) + ' ' + std::to_string(l.weights.cols()) + '\n';
    Eigen::VectorXd row;
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      row = l.weights.row(r).transpose();
      write_row(out, row.data(), row.size());
    }
    out += "b " + std::to_string(l.bias.size()) + '\n';
    write_row(out, l.bias.data(), l.bias.size());
  }
  return out;
}

DnnModel load(std::string_view bytes) {
  text::LineReader in(bytes);
  auto header = text::tokens(in.next());
  if (header.size() != 2 || header[0] != "KWSNN") throw FormatError("not a KWSNN model file");
  if (header[1] != "v1") throw VersionError("unsupported model version " + std::string(header[1]));

  DnnModel m;
  auto dims = text::tokens(in.next());
  if (dims.size() < 3 || dims[0] != "dims") throw FormatError("missing dims line");
  for (std::size_t i = 1; i < dims.size(); ++i) {
    const int d = text::parse_int<int>(dims[i]);
    if (d <= 0) throw FormatError("non-positive layer dimension");
    m.dims.push_back(d);
  }
  if (m.dims.back() != 1) throw FormatError("model must have a single output");

  auto seed = text::tokens(in.next());
  if (seed.size() != 2 || seed[0] != "seed") throw FormatError("missing seed line");
  m.seed = text::parse_int<std::uint64_t>(seed[1]);

  const auto dim = static_cast<std::size_t>(m.dims.front());
  auto mean = text::tokens(in.next());
  if (mean.size() < 2 || mean[0] != "norm" || mean[1] != "mean") throw FormatError("missing norm mean");
  m.norm.mean = read_values(std::span(mean).subspan(2), dim, "norm mean");
  auto sd = text::tokens(in.next());
  if (sd.size() < 2 || sd[0] != "norm" || sd[1] != "std") throw FormatError("missing norm std");
  m.norm.stddev = read_values(std::span(sd).subspan(2), dim, "norm std");
  for (double s : m.norm.stddev) {
    if (!(s > 0.0)) throw FormatError("norm std must be positive");
  }

  for (std::size_t l = 0; l + 1 < m.dims.size(); ++l) {
    const int in_dim = m.dims[l], out_dim = m.dims[l + 1];
    auto w = text::tokens(in.next());
    if (w.size() != 3 || w[0] != "W" || text::parse_int<int>(w[1]) != out_dim ||
        text::parse_int<int>(w[2]) != in_dim) {
      throw FormatError("layer " + std::to_string(l) + ": weight header does not match dims");
    }
    Layer layer{Eigen::MatrixXd(out_dim, in_dim), Eigen::VectorXd(out_dim)};
    for (int r = 0; r < out_dim; ++r) {
      const auto row = read_values(text::tokens(in.next()), in_dim, "weight row");
      for (int c = 0; c < in_dim; ++c) layer.weights(r, c) = row[c];
    }
    auto b = text::tokens(in.next());
    if (b.size() != 2 || b[0] != "b" || text::parse_int<int>(b[1]) != out_dim) {
      throw FormatError("layer " + std::to_string(l) + ": bias header does not match dims");
    }
    const auto bias = read_values(text::tokens(in.next()), out_dim, "bias");
    for (int r = 0; r < out_dim; ++r) layer.bias[r] = bias[r];
    m.layers.push_back(std::move(layer));
  }
  return m;
}

bool bit_equal(const DnnModel& a, const DnnModel& b) {
  if (a.dims != b.dims || a.seed != b.seed || a.norm.mean != b.norm.mean ||
      a.norm.stddev != b.norm.stddev || a.layers.size() != b.layers.size()) {
    return false;
  }
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    if (a.layers[l].weights != b.layers[l].weights || a.layers[l].bias != b.layers[l].bias) {
      return false;
    }
  }
  return true;
}

}  // namespace kws::nn
