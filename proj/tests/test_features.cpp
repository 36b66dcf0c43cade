#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "kws/errors.hpp"
#include "kws/features.hpp"
#include "kws/rng.hpp"
#include "support.hpp"

using namespace kws;

TEST_CASE("frame counting") {
  CHECK(frame_count(4000, 240, 80) == 48);
  CHECK(frame_count(240, 240, 80) == 1);
  CHECK(frame_count(4079, 240, 80) == 48);
  CHECK(frame_count(239, 240, 80) == 0);

  std::vector<double> x(4000);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
  const auto m = frame_signal(x, 240, 80);
  CHECK(m.count == 48);
  CHECK(m.frame(0).size() == 240);
  CHECK(m.frame(47)[0] == 47.0 * 80.0);
}

TEST_CASE("default geometry gives 624 inputs") {
  const FeatureConfig cfg;
  CHECK(cfg.frames_per_window() == 48);
  CHECK(cfg.window_dim() == 624);
  FeatureConfig bad;
  bad.fft_size = 100;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("FFT matches the naive DFT") {
  Rng rng(3);
  const Fft fft(256);
  for (int t = 0; t < 10; ++t) {
    const auto x = testing::random_vector(rng, 240);
    std::vector<double> p(129);
    fft.power_spectrum(x, p);
    const auto ref = testing::naive_power(x, 256);
    for (std::size_t k = 0; k < p.size(); ++k) CHECK(p[k] == doctest::Approx(ref[k]).epsilon(1e-10));
  }
}

TEST_CASE("MFCC of silence is the DCT of a constant log floor") {
  const FeatureExtractor fx;
  const std::vector<double> zero(240, 0.0);
  const auto c = fx.compute_mfcc(zero);
  REQUIRE(c.size() == 13);
  CHECK(c[0] == doctest::Approx(std::log(1e-10) * std::sqrt(26.0)).epsilon(1e-12));
  for (std::size_t k = 1; k < c.size(); ++k) CHECK(std::abs(c[k]) < 1e-9);
}

TEST_CASE("a tone at a mel centre peaks in that filter") {
  const FeatureExtractor fx;
  const auto& centres = fx.mel_centers();
  for (std::size_t k = 2; k + 2 < centres.size(); k += 3) {
    std::vector<double> frame(240);
    for (std::size_t i = 0; i < frame.size(); ++i) {
      frame[i] = std::sin(2.0 * std::numbers::pi * centres[k] * i / 8000.0);
    }
    const auto pre = fx.mfcc_preprocess(frame);
    const auto e = fx.mel_energies(testing::naive_power(pre, 256));
    CHECK(static_cast<std::size_t>(std::max_element(e.begin(), e.end()) - e.begin()) == k);
  }
}

TEST_CASE("FFT-path MFCC equals naive-DFT MFCC") {
  Rng rng(11);
  const FeatureExtractor fx;
  for (int t = 0; t < 100; ++t) {
    const auto frame = testing::random_vector(rng, 240, -0.5, 0.5);
    const auto a = fx.compute_mfcc(frame);
    const auto b = testing::naive_mfcc(fx, frame);
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(std::abs(a[k] - b[k]) <= 1e-9);
  }
}

TEST_CASE("Levinson-Durbin matches a dense Toeplitz solve") {
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    const auto r = testing::random_autocorrelation(rng, 12);
    const auto lpc = levinson_durbin(r, 12);
    const auto ref = testing::dense_lpc(r, 12);
    for (int i = 0; i < 12; ++i) CHECK(std::abs(lpc.coeffs[i] - ref[i]) <= 1e-8);
    CHECK(lpc.error > 0.0);
    for (double k : lpc.reflection) CHECK(std::abs(k) < 1.0);
  }
}

TEST_CASE("PLP of silence is deterministic and flat") {
  const FeatureExtractor fx;
  const std::vector<double> zero(240, 0.0);
  const auto lpc = fx.plp_lpc(zero);
  for (double a : lpc.coeffs) CHECK(a == 0.0);
  const auto c = fx.compute_plp(zero);
  CHECK(c[0] == doctest::Approx(std::log(1e-10)));
  for (std::size_t k = 1; k < c.size(); ++k) CHECK(c[k] == 0.0);
}

TEST_CASE("white noise gives small reflection coefficients") {
  Rng rng(9);
  const FeatureExtractor fx;
  std::vector<double> mean_abs(12, 0.0);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> frame(240);
    for (auto& v : frame) v = gaussian(rng);
    const auto lpc = fx.plp_lpc(frame);
    for (int i = 0; i < 12; ++i) mean_abs[i] += std::abs(lpc.reflection[i]) / 1000.0;
  }
  // PLP's loudness curve tilts the spectrum, which shows up in k_1 only.
  for (int i = 1; i < 12; ++i) CHECK(mean_abs[i] < 0.3);
}

TEST_CASE("window extraction shape, purity and silence") {
  Rng rng(2);
  const auto clip = testing::noise_clip(rng, 1.0, 0.1);
  const auto& fx = default_extractor();
  const auto a = fx.extract_window(clip, 120);
  const auto b = fx.extract_window(clip, 120);
  CHECK(a.mfcc.size() == 624);
  CHECK(a.plp.size() == 624);
  CHECK(a.mfcc == b.mfcc);
  CHECK(a.plp == b.plp);
  CHECK(a.origin.start_ms == 120);
  for (double v : a.mfcc) CHECK(std::isfinite(v));
  for (double v : a.plp) CHECK(std::isfinite(v));
  CHECK_THROWS_AS(fx.extract_window(clip, 600), PreconditionError);

  AudioClip silence;
  silence.samples.assign(4000, 0.0);
  const auto s = fx.extract_window(silence, 0);
  const auto zero = fx.compute_mfcc(std::vector<double>(240, 0.0));
  for (std::size_t f = 0; f < 48; ++f) {
    for (std::size_t k = 0; k < 13; ++k) CHECK(s.mfcc[f * 13 + k] == zero[k]);
  }
}

TEST_CASE("clip features slice bit-identically to extract_window") {
  Rng rng(4);
  const auto clip = testing::noise_clip(rng, 1.3, 0.2, "c");
  const auto& fx = default_extractor();
  const ClipFeatures cf(clip, fx);
  CHECK(cf.window_count() == 81);
  for (std::size_t w : {0u, 17u, 80u}) {
    const auto ref = fx.extract_window(clip, static_cast<int>(w) * 10);
    const auto v = cf.window(w);
    CHECK(std::equal(v.mfcc.begin(), v.mfcc.end(), ref.mfcc.begin(), ref.mfcc.end()));
    CHECK(std::equal(v.plp.begin(), v.plp.end(), ref.plp.begin(), ref.plp.end()));
    CHECK(cf.window_start_ms(w) == static_cast<int>(w) * 10);
  }
}
