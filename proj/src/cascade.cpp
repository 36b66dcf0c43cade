#include "kws/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "kws/errors.hpp"
#include "kws/rng.hpp"
#include "kws/text.hpp"

namespace kws {

std::string_view to_string(Representation r) {
  switch (r) {
    case Representation::kMfcc: return "mfcc";
    case Representation::kPlp: return "plp";
    case Representation::kBoth: return "both";
  }
  return "?";
}

Representation parse_representation(std::string_view s) {
  if (s == "mfcc") return Representation::kMfcc;
  if (s == "plp") return Representation::kPlp;
  if (s == "both") return Representation::kBoth;
  throw ValidationError("unknown representation '" + std::string(s) + "'");
}

CascadeModel CascadeModel::prefix(std::size_t n) const {
  KWS_REQUIRE(n >= 1 && n <= stages.size(), "prefix length out of range");
  CascadeModel m = *this;
  m.stages.resize(n);
  return m;
}

double score_stage(const CascadeStage& stage, const WindowView& w) {
  if (stage.mfcc_net && stage.plp_net) {
    return 0.5 * (nn::forward(*stage.mfcc_net, w.mfcc) + nn::forward(*stage.plp_net, w.plp));
  }
  if (stage.mfcc_net) return nn::forward(*stage.mfcc_net, w.mfcc);
  if (stage.plp_net) return nn::forward(*stage.plp_net, w.plp);
  throw PreconditionError("cascade stage has no networks");
}

WindowDecision classify_window(const CascadeModel& cascade, const WindowView& w) {
  KWS_REQUIRE(!cascade.stages.empty(), "cascade has no stages");
  WindowDecision d;
  for (const auto& stage : cascade.stages) {
    d.probability = score_stage(stage, w);
    ++d.stages_evaluated;
    if (d.probability < stage.pass_threshold) return d;
  }
  d.passed_all = true;
  return d;
}

double calibrate_threshold(std::span<const double> scores, double target) {
  KWS_REQUIRE(!scores.empty(), "calibration needs at least one positive bag");
  KWS_REQUIRE(target > 0.0 && target <= 1.0, "target pass rate must be in (0, 1]");
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const double n = static_cast<double>(sorted.size());
  auto k = static_cast<std::size_t>(std::ceil(target * n - 1e-9));
  k = std::clamp<std::size_t>(k, 1, sorted.size());
  return sorted[k - 1];
}

std::vector<std::size_t> surviving_windows(const CascadeModel* prefix, const mil::Bag& bag,
                                           const ClipFeatures& clip) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < bag.window_count; ++k) {
    const auto w = bag.first_window + k;
    if (!prefix || classify_window(*prefix, clip.window(w)).passed_all) out.push_back(w);
  }
  return out;
}

double calibrate_threshold(const CascadeStage& stage, std::span<const mil::Bag> bags,
                           std::span<const ClipFeatures> features,
                           std::span<const std::size_t> bag_clip, double target,
                           const CascadeModel* prefix) {
  KWS_REQUIRE(!bags.empty(), "calibration needs at least one positive bag");
  KWS_REQUIRE(bag_clip.size() == bags.size(), "bag/clip index size mismatch");
  std::vector<double> maxima;
  maxima.reserve(bags.size());
  for (std::size_t b = 0; b < bags.size(); ++b) {
    const auto& clip = features[bag_clip[b]];
    const auto windows = surviving_windows(prefix, bags[b], clip);
    if (windows.empty()) continue;
    double best = 0.0;
    for (auto w : windows) best = std::max(best, score_stage(stage, clip.window(w)));
    maxima.push_back(best);
  }
  if (maxima.empty()) throw ValidationError("no positive bag survives the cascade prefix");
  return calibrate_threshold(maxima, target);
}

std::vector<WindowRef> sample_windows(std::span<const ClipFeatures> repo, std::size_t count,
                                      std::uint64_t seed) {
  std::size_t population = 0;
  for (const auto& c : repo) population += c.window_count();
  if (count > population) {
    throw ValidationError("requested " + std::to_string(count) + " windows but only " +
                          std::to_string(population) + " are available");
  }
  // Selection sampling: one ordered pass, each window kept with probability
  // needed / remaining.
  Rng rng(derive_seed(seed, 0, 0x73616d));
  std::vector<WindowRef> out;
  out.reserve(count);
  std::size_t remaining = population;
  for (std::uint32_t c = 0; c < repo.size() && out.size() < count; ++c) {
    for (std::uint32_t w = 0; w < repo[c].window_count() && out.size() < count; ++w) {
      if (uniform_index(rng, remaining) < count - out.size()) out.push_back({c, w});
      --remaining;
    }
  }
  return out;
}

MiningResult mine_hard_negatives(const CascadeModel& prefix, std::span<const ClipFeatures> repo,
                                 std::size_t needed, std::optional<std::uint64_t> scan_seed) {
  MiningResult r;
  auto visit = [&](WindowRef ref) {
    ++r.scanned;
    if (classify_window(prefix, repo[ref.clip].window(ref.window)).passed_all) {
      r.windows.push_back(ref);
    }
    return r.windows.size() < needed;
  };

  if (needed > 0) {
    if (!scan_seed) {
      bool more = true;
      for (std::uint32_t c = 0; c < repo.size() && more; ++c) {
        for (std::uint32_t w = 0; w < repo[c].window_count() && more; ++w) more = visit({c, w});
      }
    } else {
      std::vector<WindowRef> order;
      for (std::uint32_t c = 0; c < repo.size(); ++c) {
        for (std::uint32_t w = 0; w < repo[c].window_count(); ++w) order.push_back({c, w});
      }
      Rng rng(derive_seed(*scan_seed, 0, 0x6d696e65));
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[uniform_index(rng, i)]);
      }
      for (const auto& ref : order) {
        if (!visit(ref)) break;
      }
    }
  }
  r.shortfall = r.windows.size() < needed;
  return r;
}

std::vector<FeatureWindow> mine_hard_negatives(const CascadeModel& prefix,
                                               std::span<const AudioClip> repository,
                                               std::size_t needed) {
  std::vector<ClipFeatures> feats;
  feats.reserve(repository.size());
  for (const auto& clip : repository) feats.emplace_back(clip, default_extractor());
  const auto mined = mine_hard_negatives(prefix, feats, needed);
  std::vector<FeatureWindow> out;
  out.reserve(mined.windows.size());
  for (const auto& ref : mined.windows) out.push_back(feats[ref.clip].materialize(ref.window));
  return out;
}

void CascadeConfig::validate() const {
  if (stages < 1 || stages > 3) throw ValidationError("stages must be 1, 2 or 3");
  if (first_stage_ratio <= 0 || later_stage_ratio <= 0) {
    throw ValidationError("negative:positive ratios must be positive");
  }
  if (!(target_pass_rate > 0.0 && target_pass_rate <= 1.0)) {
    throw ValidationError("target pass rate must be in (0, 1]");
  }
  if (!(detection_threshold >= 0.0 && detection_threshold <= 1.0)) {
    throw ValidationError("detection threshold must be in [0, 1]");
  }
  if (!(min_mining_fraction >= 0.0 && min_mining_fraction <= 1.0)) {
    throw ValidationError("minimum mining fraction must be in [0, 1]");
  }
  if (hidden.empty() || std::any_of(hidden.begin(), hidden.end(), [](int h) { return h <= 0; })) {
    throw ValidationError("hidden widths must be positive");
  }
  train.validate();
}

namespace {

std::vector<std::span<const double>> pick(const WindowView& v, Representation r) {
  return {r == Representation::kMfcc ? v.mfcc : v.plp};
}

}  // namespace

CascadeModel train_cascade(const TrainingSet& data, const CascadeConfig& cfg,
                           std::vector<TrainingLogRow>* log, std::ostream* diag) {
  cfg.validate();
  if (data.positive_bags.empty()) throw ValidationError("no positive bags to train on");
  if (data.bag_clip.size() != data.positive_bags.size() ||
      data.calibration_bag_clip.size() != data.calibration_bags.size()) {
    throw ValidationError("bag/clip index size mismatch");
  }
  if (data.negative_repository.empty()) throw ValidationError("empty negative repository");

  std::vector<Representation> reprs;
  if (cfg.repr != Representation::kPlp) reprs.push_back(Representation::kMfcc);
  if (cfg.repr != Representation::kMfcc) reprs.push_back(Representation::kPlp);

  std::vector<int> dims;
  CascadeModel model;
  model.repr = cfg.repr;
  model.detection_threshold = cfg.detection_threshold;

  std::vector<nn::Normalizer> norms(2);

  for (int s = 0; s < cfg.stages; ++s) {
    // Positive windows this stage will actually see: those the prefix passes.
    std::vector<std::vector<std::size_t>> pos_windows;
    std::vector<std::size_t> pos_bags;
    for (std::size_t b = 0; b < data.positive_bags.size(); ++b) {
      auto w = surviving_windows(s == 0 ? nullptr : &model, data.positive_bags[b],
                                 data.positive_clips[data.bag_clip[b]]);
      if (w.empty()) continue;
      pos_windows.push_back(std::move(w));
      pos_bags.push_back(b);
    }
    const std::size_t n_pos = pos_bags.size();
    if (n_pos == 0) throw ValidationError("no positive bag survives the cascade prefix");

    // Negative windows for this stage.
    std::vector<WindowRef> negatives;
    if (s == 0) {
      negatives = sample_windows(data.negative_repository, n_pos * cfg.first_stage_ratio,
                                 derive_seed(cfg.seed, 0, 0x6e6567));
    } else {
      const std::size_t want = n_pos * cfg.later_stage_ratio;
      auto mined = mine_hard_negatives(model, data.negative_repository, want,
                                       derive_seed(cfg.seed, s, 0x68617264));
      if (diag) {
        *diag << "stage " << s + 1 << ": mined " << mined.windows.size() << "/" << want
              << " hard negatives from " << mined.scanned << " windows\n";
      }
      if (mined.windows.size() < cfg.min_mining_fraction * want) {
        throw ValidationError("stage " + std::to_string(s + 1) + ": found only " +
                              std::to_string(mined.windows.size()) + " of " +
                              std::to_string(want) +
                              " hard negatives; the negative repository is too small");
      }
      if (mined.shortfall && diag) *diag << "warning: hard-negative shortfall\n";
      negatives = std::move(mined.windows);
    }

    CascadeStage stage;
    for (auto r : reprs) {
      std::vector<mil::MilItem> items;
      items.reserve(n_pos + negatives.size());
      for (std::size_t i = 0; i < n_pos; ++i) {
        const auto& clip = data.positive_clips[data.bag_clip[pos_bags[i]]];
        mil::MilItem it{{}, 1.0};
        for (auto w : pos_windows[i]) it.windows.push_back(pick(clip.window(w), r).front());
        items.push_back(std::move(it));
      }
      for (const auto& ref : negatives) {
        items.push_back(
            {pick(data.negative_repository[ref.clip].window(ref.window), r), 0.0});
      }

      const int ri = r == Representation::kMfcc ? 0 : 1;
      if (s == 0) {
        std::vector<std::span<const double>> all;
        for (const auto& it : items) all.insert(all.end(), it.windows.begin(), it.windows.end());
        norms[ri] = nn::Normalizer::fit(all);
      }
      dims.assign(1, static_cast<int>(norms[ri].mean.size()));
      dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
      dims.push_back(1);

      auto net = nn::init_model(derive_seed(cfg.seed, static_cast<std::uint64_t>(s * 2 + ri),
                                            0x696e6974),
                                dims);
      net.norm = norms[ri];
      auto tc = cfg.train;
      tc.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(s * 2 + ri), 0x73676400);
      auto on_epoch = [&](int epoch, double loss) {
        if (log) log->push_back({s + 1, r, epoch + 1, loss, n_pos, negatives.size()});
        if (diag) {
          *diag << "stage " << s + 1 << " " << to_string(r) << " epoch " << epoch + 1
                << " loss " << loss << "\n";
        }
      };
      net = mil::train_mil(std::move(net), items, tc, cfg.window_level_labels, on_epoch);
      (r == Representation::kMfcc ? stage.mfcc_net : stage.plp_net) = std::move(net);
    }

    stage.pass_threshold =
        data.calibration_bags.empty()
            ? calibrate_threshold(stage, data.positive_bags, data.positive_clips, data.bag_clip,
                                  cfg.target_pass_rate, s == 0 ? nullptr : &model)
            : calibrate_threshold(stage, data.calibration_bags, data.positive_clips,
                                  data.calibration_bag_clip, cfg.target_pass_rate,
                                  s == 0 ? nullptr : &model);
    if (diag) {
      *diag << "stage " << s + 1 << ": pass threshold " << stage.pass_threshold << "\n";
    }
    model.stages.push_back(std::move(stage));
  }
  return model;
}

void write_training_log(std::ostream& out, std::span<const TrainingLogRow> rows) {
  out << "stage,repr,epoch,loss,pos,neg\n";
  for (const auto& r : rows) {
    out << r.stage << ',' << to_string(r.repr) << ',' << r.epoch << ','
        << text::format_double(r.loss) << ',' << r.pos << ',' << r.neg << '\n';
  }
}

std::string save_cascade(const CascadeModel& model) {
  std::string out = "KWSCASCADE v1\n";
  out += "repr " + std::string(to_string(model.repr)) + "\n";
  out += "detection_threshold " + text::format_double(model.detection_threshold) + "\n";
  out += "stages " + std::to_string(model.stages.size()) + "\n";
  for (std::size_t s = 0; s < model.stages.size(); ++s) {
    const auto& st = model.stages[s];
    out += "stage " + std::to_string(s + 1) + " pass_threshold " +
           text::format_double(st.pass_threshold) + "\n";
    auto embed = [&](const char* name, const std::optional<nn::DnnModel>& net) {
      if (!net) return;
      const auto body = nn::save(*net);
      const auto lines = std::count(body.begin(), body.end(), '\n');
      out += std::string("net ") + name + " " + std::to_string(lines) + "\n" + body;
    };
    embed("mfcc", st.mfcc_net);
    embed("plp", st.plp_net);
  }
  return out;
}

CascadeModel load_cascade(std::string_view bytes) {
  text::LineReader in(bytes);
  const auto header = text::tokens(in.next());
  if (header.size() != 2 || header[0] != "KWSCASCADE") throw FormatError("not a cascade file");
  if (header[1] != "v1") throw VersionError("unsupported cascade version " + std::string(header[1]));

  auto expect = [&](std::string_view key) {
    const auto t = text::tokens(in.next());
    if (t.size() != 2 || t[0] != key) throw FormatError("expected '" + std::string(key) + "'");
    return t[1];
  };
  CascadeModel m;
  try {
    m.repr = parse_representation(expect("repr"));
  } catch (const ValidationError& e) {
    throw FormatError(e.what());
  }
  m.detection_threshold = text::parse_double(expect("detection_threshold"));
  const auto n = text::parse_int<int>(expect("stages"));
  if (n < 1 || n > 3) throw FormatError("cascade must have 1 to 3 stages");

  for (int s = 0; s < n; ++s) {
    const auto t = text::tokens(in.next());
    if (t.size() != 4 || t[0] != "stage" || t[2] != "pass_threshold" ||
        text::parse_int<int>(t[1]) != s + 1) {
      throw FormatError("malformed stage header");
    }
    CascadeStage st;
    st.pass_threshold = text::parse_double(t[3]);
    if (!(st.pass_threshold >= 0.0 && st.pass_threshold <= 1.0)) {
      throw FormatError("pass threshold outside [0, 1]");
    }
    const int nets = m.repr == Representation::kBoth ? 2 : 1;
    for (int k = 0; k < nets; ++k) {
      const auto nt = text::tokens(in.next());
      if (nt.size() != 3 || nt[0] != "net") throw FormatError("malformed net header");
      const auto lines = text::parse_int<long>(nt[2]);
      const auto rest = in.remaining();
      std::size_t pos = 0;
      for (long i = 0; i < lines; ++i) {
        pos = rest.find('\n', pos);
        if (pos == std::string_view::npos) throw FormatError("truncated embedded model");
        ++pos;
      }
      auto net = nn::load(rest.substr(0, pos));
      for (long i = 0; i < lines; ++i) in.next();
      if (nt[1] == "mfcc" && m.repr != Representation::kPlp && !st.mfcc_net) {
        st.mfcc_net = std::move(net);
      } else if (nt[1] == "plp" && m.repr != Representation::kMfcc && !st.plp_net) {
        st.plp_net = std::move(net);
      } else {
        throw FormatError("unexpected net '" + std::string(nt[1]) + "'");
      }
    }
    m.stages.push_back(std::move(st));
  }
  return m;
}

}  // namespace kws
