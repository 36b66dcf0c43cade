#pragma once
// Independent reference implementations shared by the unit and acceptance
// tests. None of these call into the code paths they check.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kws/audio_io.hpp"
#include "kws/features.hpp"
#include "kws/mil.hpp"
#include "kws/nn.hpp"
#include "kws/rng.hpp"

namespace kws::testing {

struct UlawRef {
  int pcm;
  int code;
};

inline constexpr UlawRef kUlawTable[] = {
#include "ulaw_table.inc"
};

/// |X[k]|^2 for k = 0..n/2 by direct summation, input zero-padded to n.
inline std::vector<double> naive_power(std::span<const double> x, std::size_t n) {
  std::vector<double> out(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < x.size(); ++t) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * t % n) / n;
      acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = std::norm(acc);
  }
  return out;
}

/// MFCC computed with a naive DFT in place of the FFT.
inline std::vector<double> naive_mfcc(const FeatureExtractor& fx, std::span<const double> frame) {
  const auto pre = fx.mfcc_preprocess(frame);
  return fx.mfcc_from_power(naive_power(pre, static_cast<std::size_t>(fx.config().fft_size)));
}

/// Predictor coefficients from the normal equations R a = r[1..p], solved
/// densely.
inline std::vector<double> dense_lpc(std::span<const double> r, int order) {
  Eigen::MatrixXd R(order, order);
  Eigen::VectorXd rhs(order);
  for (int i = 0; i < order; ++i) {
    rhs(i) = r[i + 1];
    for (int j = 0; j < order; ++j) R(i, j) = r[std::abs(i - j)];
  }
  const Eigen::VectorXd a = R.partialPivLu().solve(rhs);
  return {a.data(), a.data() + order};
}

/// Autocorrelation of a random stable AR process realisation, which keeps
/// the Toeplitz system well conditioned.
inline std::vector<double> random_autocorrelation(Rng& rng, int order, std::size_t n = 512) {
  std::vector<double> x(n);
  const double a1 = uniform(rng, -0.9, 0.9);
  const double a2 = uniform(rng, -0.5, 0.5) * (1.0 - std::abs(a1));
  double y1 = 0.0, y2 = 0.0;
  for (auto& v : x) {
    v = a1 * y1 + a2 * y2 + gaussian(rng);
    y2 = y1;
    y1 = v;
  }
  std::vector<double> r(order + 1, 0.0);
  for (int k = 0; k <= order; ++k) {
    for (std::size_t t = static_cast<std::size_t>(k); t < n; ++t) r[k] += x[t] * x[t - k];
  }
  return r;
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double lo = -1.0,
                                         double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = uniform(rng, lo, hi);
  return v;
}

/// Small network with random weights and biases, identity normalizer.
inline nn::DnnModel random_model(Rng& rng, const std::vector<int>& dims) {
  auto m = nn::init_model(rng(), dims);
  for (auto& l : m.layers) {
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = uniform(rng, -0.5, 0.5);
  }
  return m;
}

/// Visits every parameter of a model in a fixed order.
template <typename F>
void for_each_param(nn::DnnModel& m, F&& f) {
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    auto& W = m.layers[l].weights;
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      for (Eigen::Index j = 0; j < W.cols(); ++j) f(l, i, j, W(i, j));
    }
    auto& b = m.layers[l].bias;
    for (Eigen::Index i = 0; i < b.size(); ++i) f(l, i, Eigen::Index{-1}, b(i));
  }
}

inline double grad_entry(const nn::Gradient& g, std::size_t l, Eigen::Index i, Eigen::Index j) {
  return j < 0 ? g.layers[l].bias(i) : g.layers[l].weights(i, j);
}

/// Largest relative error between an analytic gradient and central
/// differences of `loss`, |a - n| / max(|a|, |n|, floor).
template <typename Loss>
double max_relative_error(nn::DnnModel model, const nn::Gradient& analytic, Loss&& loss,
                          double h = 1e-5, double floor = 1e-6) {
  double worst = 0.0;
  for_each_param(model, [&](std::size_t l, Eigen::Index i, Eigen::Index j, double& w) {
    const double saved = w;
    w = saved + h;
    const double up = loss(model);
    w = saved - h;
    const double down = loss(model);
    w = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double a = grad_entry(analytic, l, i, j);
    const double scale = std::max({std::abs(a), std::abs(numeric), floor});
    worst = std::max(worst, std::abs(a - numeric) / scale);
  });
  return worst;
}

/// Synthetic clip: white noise at `level` plus optional tone bursts.
inline AudioClip noise_clip(Rng& rng, double seconds, double level, std::string id = "noise") {
  AudioClip c;
  c.id = std::move(id);
  c.samples.resize(static_cast<std::size_t>(seconds * kNarrowBandRate));
  for (auto& s : c.samples) s = level * gaussian(rng);
  return c;
}

}  // namespace kws::testing
