#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "kws/errors.hpp"
#include "kws/nn.hpp"
#include "kws/rng.hpp"
#include "support.hpp"

using namespace kws;

namespace {

/// Straight-line forward pass with plain loops.
double reference_forward(const nn::DnnModel& m, const std::vector<double>& x) {
  std::vector<double> a(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) a[i] = (x[i] - m.norm.mean[i]) / m.norm.stddev[i];
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto& W = m.layers[l].weights;
    std::vector<double> z(static_cast<std::size_t>(W.rows()));
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
      double acc = m.layers[l].bias(r);
      for (Eigen::Index c = 0; c < W.cols(); ++c) acc += W(r, c) * a[static_cast<std::size_t>(c)];
      z[static_cast<std::size_t>(r)] = l + 1 < m.layers.size() ? std::max(acc, 0.0) : acc;
    }
    a = z;
  }
  return 1.0 / (1.0 + std::exp(-a[0]));
}

double auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  double wins = 0.0;
  for (double p : pos) {
    for (double n : neg) wins += p > n ? 1.0 : p == n ? 0.5 : 0.0;
  }
  return wins / static_cast<double>(pos.size() * neg.size());
}

}  // namespace

TEST_CASE("init_model shape, bounds and determinism") {
  const auto m = nn::init_model(42);
  REQUIRE(m.layers.size() == 3);
  CHECK(m.layers[0].weights.rows() == 128);
  CHECK(m.layers[0].weights.cols() == 624);
  CHECK(m.layers[1].weights.rows() == 128);
  CHECK(m.layers[2].weights.rows() == 1);
  const double bound = std::sqrt(6.0 / (624 + 128));
  CHECK(m.layers[0].weights.cwiseAbs().maxCoeff() <= bound);
  CHECK(m.layers[0].weights.allFinite());
  CHECK(nn::bit_equal(m, nn::init_model(42)));
  CHECK_FALSE(nn::bit_equal(m, nn::init_model(43)));
}

TEST_CASE("forward output") {
  auto zero = nn::init_model(1, {5, 3, 1});
  for (auto& l : zero.layers) l.weights.setZero();
  CHECK(nn::forward(zero, std::vector<double>{1, 2, 3, 4, 5}) == 0.5);

  Rng rng(8);
  for (int t = 0; t < 10; ++t) {
    auto m = testing::random_model(rng, {7, 6, 4, 1});
    for (int i = 0; i < 7; ++i) {
      m.norm.mean[i] = uniform(rng, -1, 1);
      m.norm.stddev[i] = uniform(rng, 0.5, 2);
    }
    for (int k = 0; k < 10; ++k) {
      const auto x = testing::random_vector(rng, 7, -3, 3);
      const double p = nn::forward(m, x);
      CHECK(p > 0.0);
      CHECK(p < 1.0);
      CHECK(std::abs(p - reference_forward(m, x)) <= 1e-12);
    }
  }
}

TEST_CASE("BCE gradient") {
  auto m = nn::init_model(3, {4, 3, 1});
  for (auto& l : m.layers) l.weights.setZero();
  const std::vector<double> x{1, 2, 3, 4};
  const nn::Example ex{x, 1.0};
  const auto g = nn::grad(m, std::span(&ex, 1));
  CHECK(g.layers.back().bias(0) == doctest::Approx(-0.5));

  Rng rng(12);
  auto r = testing::random_model(rng, {6, 5, 1});
  std::vector<std::vector<double>> xs;
  for (int i = 0; i < 8; ++i) xs.push_back(testing::random_vector(rng, 6));
  std::vector<nn::Example> batch;
  for (int i = 0; i < 8; ++i) batch.push_back({xs[i], static_cast<double>(i % 2)});
  const auto gr = nn::grad(r, batch);
  CHECK(testing::max_relative_error(r, gr, [&](const nn::DnnModel& mm) {
          return nn::mean_loss(mm, batch);
        }) < 1e-4);

  auto doubled = batch;
  doubled.insert(doubled.end(), batch.begin(), batch.end());
  auto gd = nn::grad(r, doubled);
  gd.add(gr, -1.0);
  CHECK(gd.max_abs() <= 1e-12);
}

TEST_CASE("training separates two blobs and is deterministic") {
  Rng rng(21);
  const int dim = 624;
  std::vector<std::vector<double>> xs;
  std::vector<nn::Example> data, flipped;
  for (int i = 0; i < 200; ++i) {
    const double centre = i % 2 ? 0.3 : -0.3;
    std::vector<double> x(dim);
    for (auto& v : x) v = centre + gaussian(rng);
    xs.push_back(std::move(x));
  }
  for (int i = 0; i < 200; ++i) {
    data.push_back({xs[i], static_cast<double>(i % 2)});
    flipped.push_back({xs[i], static_cast<double>(1 - i % 2)});
  }
  nn::TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 20;
  const auto dims = std::vector<int>{dim, 16, 1};
  const auto m = nn::train(nn::init_model(5, dims), data, cfg);
  int correct = 0;
  std::vector<double> pos, neg, fpos, fneg;
  const auto mf = nn::train(nn::init_model(5, dims), flipped, cfg);
  for (const auto& e : data) {
    const double p = nn::forward(m, e.x);
    correct += (p >= 0.5) == (e.label == 1.0);
    (e.label == 1.0 ? pos : neg).push_back(p);
    (e.label == 1.0 ? fpos : fneg).push_back(nn::forward(mf, e.x));
  }
  CHECK(correct >= 198);
  CHECK(std::abs(auc(pos, neg) + auc(fpos, fneg) - 1.0) <= 0.05);
  CHECK(nn::bit_equal(m, nn::train(nn::init_model(5, dims), data, cfg)));

  std::vector<nn::Example> one_class(data.begin(), data.begin() + 1);
  CHECK_THROWS(nn::train(nn::init_model(5, dims), one_class, cfg));
}

TEST_CASE("model files round-trip bit-exactly") {
  Rng rng(13);
  auto m = testing::random_model(rng, {9, 4, 1});
  m.norm.mean[2] = 0.1;
  m.norm.stddev[3] = 3.0;
  const auto text = nn::save(m);
  const auto back = nn::load(text);
  CHECK(nn::bit_equal(m, back));
  for (int i = 0; i < 100; ++i) {
    const auto x = testing::random_vector(rng, 9);
    CHECK(nn::forward(m, x) == nn::forward(back, x));
  }
  CHECK_THROWS_AS(nn::load(text.substr(0, text.size() / 2)), FormatError);
  auto v99 = text;
  v99.replace(v99.find("v1"), 2, "v99");
  CHECK_THROWS_AS(nn::load(v99), VersionError);
}
