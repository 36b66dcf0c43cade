#include "kws/config.hpp"

#include <fstream>
#include <ostream>

#include "kws/errors.hpp"
#include "kws/text.hpp"

namespace kws {

namespace {

bool parse_bool(std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw FormatError("not a boolean: '" + std::string(v) + "'");
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

void Config::set(std::string_view key, std::string_view v) {
  using text::parse_double;
  using text::parse_int;
  if (key == "window_ms") window_ms = parse_int<int>(v);
  else if (key == "stride_ms") stride_ms = parse_int<int>(v);
  else if (key == "n_coeffs") n_coeffs = parse_int<int>(v);
  else if (key == "stages") stages = parse_int<int>(v);
  else if (key == "repr") repr = parse_representation(v);
  else if (key == "first_stage_ratio") first_stage_ratio = parse_int<int>(v);
  else if (key == "later_stage_ratio") later_stage_ratio = parse_int<int>(v);
  else if (key == "pass_rate") pass_rate = parse_double(v);
  else if (key == "calibration_fraction") calibration_fraction = parse_double(v);
  else if (key == "detection_threshold") detection_threshold = parse_double(v);
  else if (key == "min_mining_fraction") min_mining_fraction = parse_double(v);
  else if (key == "window_level_labels") window_level_labels = parse_bool(v);
  else if (key == "hidden") {
    hidden.clear();
    for (auto f : text::split(v, ',')) hidden.push_back(parse_int<int>(trim(f)));
  } else if (key == "learning_rate") learning_rate = parse_double(v);
  else if (key == "momentum") momentum = parse_double(v);
  else if (key == "batch_size") batch_size = parse_int<int>(v);
  else if (key == "epochs") epochs = parse_int<int>(v);
  else if (key == "train_seed") train_seed = parse_int<std::uint64_t>(v);
  else if (key == "horizon_ticks") horizon_ticks = parse_int<int>(v);
  else if (key == "refractory_ms") refractory_ms = parse_int<int>(v);
  else if (key == "thresholds") thresholds = std::string(v);
  else if (key == "tolerance_ms") tolerance_ms = parse_int<int>(v);
  else if (key == "min_negative_hours") min_negative_hours = parse_double(v);
  else if (key == "speakers") speakers = parse_int<int>(v);
  else if (key == "utterances") utterances = parse_int<int>(v);
  else if (key == "neg_hours") neg_hours = parse_double(v);
  else if (key == "corpus_seed") corpus_seed = parse_int<std::uint64_t>(v);
  else throw ValidationError("unknown config key '" + std::string(key) + "'");
}

FeatureConfig Config::feature_config() const {
  FeatureConfig f;
  f.window_ms = window_ms;
  f.frame_stride = stride_ms * f.sample_rate_hz / 1000;
  f.n_coeffs = n_coeffs;
  return f;
}

CascadeConfig Config::cascade_config() const {
  CascadeConfig c;
  c.stages = stages;
  c.repr = repr;
  c.first_stage_ratio = first_stage_ratio;
  c.later_stage_ratio = later_stage_ratio;
  c.target_pass_rate = pass_rate;
  c.detection_threshold = detection_threshold;
  c.min_mining_fraction = min_mining_fraction;
  c.window_level_labels = window_level_labels;
  c.hidden = hidden;
  c.train.learning_rate = learning_rate;
  c.train.momentum = momentum;
  c.train.batch_size = batch_size;
  c.train.epochs = epochs;
  c.train.seed = train_seed;
  c.seed = train_seed;
  return c;
}

StreamConfig Config::stream_config() const {
  return {horizon_ticks, refractory_ms, std::nullopt};
}

eval::SweepOptions Config::sweep_options() const {
  return {stream_config(), tolerance_ms, min_negative_hours};
}

corpus::SynthParams Config::synth_params() const {
  corpus::SynthParams p;
  p.n_speakers = speakers;
  p.utterances_per_speaker = utterances;
  p.neg_hours = neg_hours;
  p.seed = corpus_seed;
  return p;
}

std::vector<double> Config::threshold_list() const {
  if (thresholds.find(',') == std::string::npos) {
    return eval::threshold_grid(text::parse_int<int>(trim(thresholds)));
  }
  std::vector<double> out;
  for (auto f : text::split(thresholds, ',')) {
    const double t = text::parse_double(trim(f));
    if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("thresholds must lie in [0, 1]");
    out.push_back(t);
  }
  return out;
}

void Config::validate() const {
  if (stride_ms <= 0 || window_ms <= 0) throw ValidationError("window and stride must be positive");
  feature_config().validate();
  cascade_config().validate();
  stream_config().validate();
  synth_params().validate();
  if (!(calibration_fraction >= 0.0 && calibration_fraction < 1.0)) {
    throw ValidationError("calibration_fraction must be in [0, 1)");
  }
  if (tolerance_ms < 0) throw ValidationError("tolerance must be non-negative");
  if (min_negative_hours < 0.0) throw ValidationError("min_negative_hours must be non-negative");
  threshold_list();
}

Config parse_config(std::istream& in, Config base) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view s = line;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) {
      throw FormatError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    base.set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
  return base;
}

Config load_config(const std::filesystem::path& path, Config base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  return parse_config(in, std::move(base));
}

void write_config(std::ostream& out, const Config& c) {
  out << "window_ms=" << c.window_ms << "\nstride_ms=" << c.stride_ms
      << "\nn_coeffs=" << c.n_coeffs << "\nstages=" << c.stages << "\nrepr=" << to_string(c.repr)
      << "\nfirst_stage_ratio=" << c.first_stage_ratio
      << "\nlater_stage_ratio=" << c.later_stage_ratio
      << "\npass_rate=" << text::format_double(c.pass_rate)
      << "\ncalibration_fraction=" << text::format_double(c.calibration_fraction)
      << "\ndetection_threshold=" << text::format_double(c.detection_threshold)
      << "\nmin_mining_fraction=" << text::format_double(c.min_mining_fraction)
      << "\nwindow_level_labels=" << (c.window_level_labels ? "true" : "false") << "\nhidden=";
  for (std::size_t i = 0; i < c.hidden.size(); ++i) out << (i ? "," : "") << c.hidden[i];
  out << "\nlearning_rate=" << text::format_double(c.learning_rate)
      << "\nmomentum=" << text::format_double(c.momentum) << "\nbatch_size=" << c.batch_size
      << "\nepochs=" << c.epochs << "\ntrain_seed=" << c.train_seed
      << "\nhorizon_ticks=" << c.horizon_ticks << "\nrefractory_ms=" << c.refractory_ms
      << "\nthresholds=" << c.thresholds << "\ntolerance_ms=" << c.tolerance_ms
      << "\nmin_negative_hours=" << text::format_double(c.min_negative_hours)
      << "\nspeakers=" << c.speakers << "\nutterances=" << c.utterances
      << "\nneg_hours=" << text::format_double(c.neg_hours) << "\ncorpus_seed=" << c.corpus_seed
      << '\n';
}

}  // namespace kws
