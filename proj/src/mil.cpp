#include "kws/mil.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include "kws/errors.hpp"
#include "kws/rng.hpp"
#include "kws/text.hpp"

namespace kws::mil {

namespace {

void check_probs(std::span<const double> probs) {
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw PreconditionError("noisy-or input outside [0, 1]: " + text::format_double(p));
    }
  }
}

double log_complement_sum(std::span<const double> probs) {
  double s = 0.0;
  for (double p : probs) s += std::log1p(-p);
  return s;
}

}  // namespace

double noisy_or(std::span<const double> probs) {
  check_probs(probs);
  return -std::expm1(log_complement_sum(probs));
}

std::vector<double> noisy_or_grad(std::span<const double> probs) {
  check_probs(probs);
  const std::size_t n = probs.size();
  std::vector<double> prefix(n + 1, 0.0), suffix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + std::log1p(-probs[i]);
  for (std::size_t i = n; i-- > 0;) suffix[i] = suffix[i + 1] + std::log1p(-probs[i]);
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = std::exp(prefix[i] + suffix[i + 1]);
  return g;
}

BagLoss bag_loss_grad(std::span<const double> probs, BagLabel label) {
  check_probs(probs);
  const double s = log_complement_sum(probs);
  const double q = -std::expm1(s);
  const double none = std::exp(s);  // 1 - q without cancellation
  const double y = label == BagLabel::kPositive ? 1.0 : 0.0;

  BagLoss out;
  out.loss = nn::bce(y, q);
  const double dq = y > 0.0 ? -1.0 / std::max(q, nn::kProbClamp)
                            : 1.0 / std::max(none, nn::kProbClamp);
  out.dprobs = noisy_or_grad(probs);
  for (auto& d : out.dprobs) d *= dq;
  return out;
}

std::vector<Bag> make_bags(const AudioClip& clip, std::span<const Annotation> annotations,
                           const BagConfig& cfg) {
  KWS_REQUIRE(clip.sample_rate_hz == kNarrowBandRate, "make_bags requires 8 kHz audio");
  if (cfg.negative_bag_ms < cfg.window_ms) {
    throw ValidationError("negative bag length must cover at least one window");
  }
  const double dur = clip.duration_ms();
  const auto samples_per_ms = clip.sample_rate_hz / 1000;
  const std::size_t window_samples = static_cast<std::size_t>(cfg.window_ms) * samples_per_ms;
  const std::size_t stride_samples = static_cast<std::size_t>(cfg.stride_ms) * samples_per_ms;
  const std::size_t n_windows =
      clip.samples.size() >= window_samples
          ? (clip.samples.size() - window_samples) / stride_samples + 1
          : 0;

  std::vector<Annotation> spans(annotations.begin(), annotations.end());
  std::sort(spans.begin(), spans.end(),
            [](const auto& a, const auto& b) { return a.start_ms < b.start_ms; });

  std::vector<Bag> bags;
  const int half = cfg.window_ms / 2;
  for (const auto& a : spans) {
    const std::string where = clip.id + " [" + std::to_string(a.start_ms) + ", " +
                              std::to_string(a.end_ms) + ") ms";
    if (!a.clip_id.empty() && a.clip_id != clip.id) {
      throw ValidationError("annotation for " + a.clip_id + " passed with clip " + clip.id);
    }
    if (a.start_ms < 0 || a.end_ms > dur || a.end_ms <= a.start_ms) {
      throw ValidationError("span outside clip: " + where);
    }
    if (a.duration_ms() < cfg.min_span_ms) {
      throw ValidationError("span shorter than " + std::to_string(cfg.min_span_ms) +
                            " ms: " + where);
    }
    // Window i is centred at i * stride + half.
    const int lo = a.start_ms - half;
    const long first = lo <= 0 ? 0 : (lo + cfg.stride_ms - 1) / cfg.stride_ms;
    long last = (a.end_ms - half - 1) >= 0 ? (a.end_ms - half - 1) / cfg.stride_ms : -1;
    last = std::min<long>(last, static_cast<long>(n_windows) - 1);
    if (last < first) throw ValidationError("span contains no window centre: " + where);
    bags.push_back({clip.id, a.start_ms, a.end_ms, static_cast<std::size_t>(first),
                    static_cast<std::size_t>(last - first + 1), BagLabel::kPositive});
  }

  // Keyword-free regions between spans.
  std::vector<std::pair<int, int>> free;
  int cursor = 0;
  for (const auto& a : spans) {
    if (a.start_ms > cursor) free.emplace_back(cursor, a.start_ms);
    cursor = std::max(cursor, a.end_ms);
  }
  const int clip_end = static_cast<int>(std::floor(dur));
  if (clip_end > cursor) free.emplace_back(cursor, clip_end);

  for (const auto& [a, b] : free) {
    for (int c = a; c + cfg.window_ms <= b; c += cfg.negative_bag_ms) {
      const int stop = std::min(c + cfg.negative_bag_ms, b);
      const long first = (c + cfg.stride_ms - 1) / cfg.stride_ms;
      long last = (stop - cfg.window_ms) / cfg.stride_ms;
      last = std::min<long>(last, static_cast<long>(n_windows) - 1);
      if (last < first) continue;
      bags.push_back({clip.id, c, stop, static_cast<std::size_t>(first),
                      static_cast<std::size_t>(last - first + 1), BagLabel::kNegative});
    }
  }
  return bags;
}

std::vector<FeatureWindow> materialize(const Bag& bag, const ClipFeatures& features) {
  std::vector<FeatureWindow> out;
  out.reserve(bag.window_count);
  for (std::size_t k = 0; k < bag.window_count; ++k) {
    out.push_back(features.materialize(bag.first_window + k));
  }
  return out;
}

namespace {

// Forward all windows of the items, then fill dz with dL/dlogit for the mean
// bag loss. Returns the summed (not averaged) bag loss.
double bag_pass(const nn::DnnModel& model, std::span<const MilItem> items,
                std::span<const std::size_t> order, nn::BatchPass& pass,
                std::vector<std::span<const double>>& inputs, std::vector<double>& dz) {
  inputs.clear();
  for (auto idx : order) {
    const auto& it = items[idx];
    inputs.insert(inputs.end(), it.windows.begin(), it.windows.end());
  }
  const auto& p = pass.forward(model, inputs);
  dz.assign(p.size(), 0.0);
  const double inv = 1.0 / static_cast<double>(order.size());
  double loss = 0.0;
  std::size_t offset = 0;
  for (auto idx : order) {
    const auto& it = items[idx];
    const auto n = it.windows.size();
    const auto probs = std::span(p).subspan(offset, n);
    const auto bl =
        bag_loss_grad(probs, it.label > 0.5 ? BagLabel::kPositive : BagLabel::kNegative);
    loss += bl.loss;
    for (std::size_t i = 0; i < n; ++i) {
      dz[offset + i] = bl.dprobs[i] * probs[i] * (1.0 - probs[i]) * inv;
    }
    offset += n;
  }
  return loss;
}

}  // namespace

double mil_loss(const nn::DnnModel& model, std::span<const MilItem> items) {
  KWS_REQUIRE(!items.empty(), "no bags");
  double acc = 0.0;
  std::vector<double> p;
  for (const auto& it : items) {
    p.clear();
    for (const auto& w : it.windows) p.push_back(nn::forward(model, w));
    acc += bag_loss_grad(p, it.label > 0.5 ? BagLabel::kPositive : BagLabel::kNegative).loss;
  }
  return acc / static_cast<double>(items.size());
}

nn::Gradient mil_grad(const nn::DnnModel& model, std::span<const MilItem> items) {
  KWS_REQUIRE(!items.empty(), "no bags");
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  nn::BatchPass pass;
  std::vector<std::span<const double>> inputs;
  std::vector<double> dz;
  bag_pass(model, items, order, pass, inputs, dz);
  auto g = nn::Gradient::zeros_like(model);
  pass.backward(model, dz, g);
  return g;
}

nn::DnnModel train_mil(nn::DnnModel model, std::span<const MilItem> items,
                       const nn::TrainConfig& cfg, bool window_level,
                       const nn::EpochCallback& on_epoch) {
  cfg.validate();
  if (items.empty()) throw ValidationError("training data is empty");
  bool has_pos = false, has_neg = false;
  for (const auto& it : items) {
    if (it.windows.empty()) throw ValidationError("bag without windows");
    (it.label > 0.5 ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg) throw ValidationError("training data must contain both classes");

  std::vector<MilItem> singletons;
  if (window_level) {
    for (const auto& it : items) {
      for (const auto& w : it.windows) singletons.push_back({{w}, it.label});
    }
    items = singletons;
  }

  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(cfg.seed, 0, 0x6d696c));
  nn::SgdMomentum opt(model, cfg.learning_rate, cfg.momentum);
  nn::BatchPass pass;
  std::vector<std::span<const double>> inputs;
  std::vector<double> dz;
  auto g = nn::Gradient::zeros_like(model);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[uniform_index(rng, i)]);
    }
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      loss_sum += bag_pass(model, items, std::span(order).subspan(start, stop - start), pass,
                           inputs, dz);
      g.scale(0.0);
      pass.backward(model, dz, g);
      opt.step(model, g);
    }
    if (on_epoch) on_epoch(epoch, loss_sum / static_cast<double>(items.size()));
  }
  return model;
}

std::vector<Annotation> read_annotations(std::istream& in) {
  std::vector<Annotation> out;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line.rfind("clip_id,", 0) == 0) continue;
    }
    const auto f = text::split(line, ',');
    if (f.size() != 4) throw FormatError("annotation row needs 4 fields: " + line);
    Annotation a{std::string(f[0]), text::parse_int<int>(f[1]), text::parse_int<int>(f[2]),
                 std::string(f[3])};
    if (a.label != "keyword") throw FormatError("unknown annotation label: " + a.label);
    out.push_back(std::move(a));
  }
  return out;
}

void write_annotations(std::ostream& out, std::span<const Annotation> annotations) {
  out << "clip_id,start_ms,end_ms,label\n";
  for (const auto& a : annotations) {
    out << a.clip_id << ',' << a.start_ms << ',' << a.end_ms << ',' << a.label << '\n';
  }
}

}  // namespace kws::mil
