#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "kws/audio_io.hpp"
#include "kws/cascade.hpp"
#include "kws/config.hpp"
#include "kws/corpus.hpp"
#include "kws/errors.hpp"
#include "kws/eval.hpp"
#include "kws/features.hpp"
#include "kws/stream.hpp"

namespace {

using namespace kws;

constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;
constexpr int kExitFormat = 4;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << body;
  if (!out) throw IoError("write failed: " + path);
}

AudioClip load_audio(const std::string& path) {
  auto clip = read_wav(path);
  return clip.sample_rate_hz == kNarrowBandRate ? clip : to_narrow_band(clip);
}

/// Config file first, then command-line overrides in the order given.
struct Settings {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;

  Config resolve() const {
    Config c;
    if (!config_path.empty()) c = load_config(config_path);
    for (const auto& [k, v] : overrides) c.set(k, v);
    c.validate();
    set_default_feature_config(c.feature_config());
    return c;
  }
};

void add_override(CLI::App* app, Settings& s, const std::string& flag, const std::string& key,
                  const std::string& help) {
  app->add_option_function<std::string>(
      flag, [&s, key](const std::string& v) { s.overrides.emplace_back(key, v); }, help);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Keyword spotting with cascaded multi-representation classifiers"};
  app.require_subcommand(1);
  Settings settings;
  app.add_option("--config", settings.config_path, "key=value config file")
      ->check(CLI::ExistingFile);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  std::string synth_out;
  add_override(synth, settings, "--speakers", "speakers", "Number of speakers");
  add_override(synth, settings, "--utterances", "utterances", "Keyword utterances per speaker");
  add_override(synth, settings, "--neg-hours", "neg_hours", "Hours of keyword-free audio");
  add_override(synth, settings, "--seed", "corpus_seed", "Corpus seed");
  synth->add_option("--out", synth_out, "Output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Train a cascade on the corpus train split");
  std::string train_corpus, train_out, train_log;
  train->add_option("--corpus", train_corpus, "Corpus directory")->required();
  add_override(train, settings, "--stages", "stages", "Cascade stages (1-3)");
  add_override(train, settings, "--repr", "repr", "mfcc, plp or both");
  add_override(train, settings, "--epochs", "epochs", "Epochs per network");
  add_override(train, settings, "--seed", "train_seed", "Training seed");
  add_override(train, settings, "--pass-rate", "pass_rate", "Per-stage positive pass rate");
  train->add_option("--out", train_out, "Model file")->required();
  train->add_option("--log", train_log, "Training log CSV");
  bool verbose = false;
  train->add_flag("-v,--verbose", verbose, "Progress on stderr");

  // calibrate
  auto* calibrate = app.add_subcommand("calibrate", "Recalibrate stage pass thresholds");
  std::string cal_model, cal_corpus, cal_out;
  calibrate->add_option("--model", cal_model, "Model file")->required();
  calibrate->add_option("--corpus", cal_corpus, "Corpus directory")->required();
  add_override(calibrate, settings, "--pass-rate", "pass_rate", "Target pass rate");
  calibrate->add_option("--out", cal_out, "Output model (default: overwrite)");

  // eval
  auto* evalc = app.add_subcommand("eval", "ROC sweep on the corpus eval split");
  std::string eval_model, eval_corpus, eval_out;
  evalc->add_option("--model", eval_model, "Model file")->required();
  evalc->add_option("--corpus", eval_corpus, "Corpus directory")->required();
  add_override(evalc, settings, "--thresholds", "thresholds",
               "Point count or comma-separated thresholds");
  evalc->add_option("--out", eval_out, "ROC CSV")->required();

  // compare
  auto* compare = app.add_subcommand("compare", "Dominance report for two ROC CSVs");
  std::string cmp_a, cmp_b, cmp_out;
  compare->add_option("--a", cmp_a, "ROC CSV of model A")->required();
  compare->add_option("--b", cmp_b, "ROC CSV of model B")->required();
  compare->add_option("--out", cmp_out, "Report file (default: stdout)");

  // listen
  auto* listen = app.add_subcommand("listen", "Stream audio and print detection events");
  std::string listen_model, listen_wav;
  bool listen_stdin = false;
  listen->add_option("--model", listen_model, "Model file")->required();
  auto* wav_opt = listen->add_option("--wav", listen_wav, "WAV file");
  auto* stdin_opt =
      listen->add_flag("--stdin-pcm", listen_stdin, "Raw 16-bit little-endian 8 kHz on stdin");
  wav_opt->excludes(stdin_opt);
  std::optional<double> listen_threshold;
  listen->add_option("--threshold", listen_threshold, "Detection threshold (default: the model's)");

  // features
  auto* features = app.add_subcommand("features", "Dump the features of one window");
  std::string feat_wav;
  int feat_at = 0;
  features->add_option("--wav", feat_wav, "WAV file")->required();
  features->add_option("--at", feat_at, "Window start in ms")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitValidation;
  }

  try {
    const Config cfg = settings.resolve();

    if (*synth) {
      const auto corpus = corpus::synth_corpus(cfg.synth_params());
      corpus::write_corpus(corpus, synth_out);
      std::cerr << "wrote " << corpus.clips.size() << " clips to " << synth_out << "\n";
    } else if (*train) {
      const auto corpus = corpus::load_corpus(train_corpus);
      auto data = corpus::make_training_set(corpus::extract_split(corpus, corpus::Split::kTrain),
                                            corpus, corpus::Split::kTrain,
                                            cfg.calibration_fraction);
      std::vector<TrainingLogRow> log;
      const auto model =
          train_cascade(data, cfg.cascade_config(), &log, verbose ? &std::cerr : nullptr);
      write_file(train_out, save_cascade(model));
      if (!train_log.empty()) {
        std::ostringstream ss;
        write_training_log(ss, log);
        write_file(train_log, ss.str());
      }
    } else if (*calibrate) {
      auto model = load_cascade(read_file(cal_model));
      const auto corpus = corpus::load_corpus(cal_corpus);
      const auto data = corpus::make_training_set(
          corpus::extract_split(corpus, corpus::Split::kTrain), corpus, corpus::Split::kTrain,
          cfg.calibration_fraction);
      const bool held_out = !data.calibration_bags.empty();
      const auto& bags = held_out ? data.calibration_bags : data.positive_bags;
      const auto& bag_clip = held_out ? data.calibration_bag_clip : data.bag_clip;
      for (std::size_t s = 0; s < model.stages.size(); ++s) {
        const auto prefix = s == 0 ? CascadeModel{} : model.prefix(s);
        auto& st = model.stages[s];
        st.pass_threshold = calibrate_threshold(st, bags, data.positive_clips, bag_clip,
                                                cfg.pass_rate,
                                                s == 0 ? nullptr : &prefix);
        std::cout << "stage " << s + 1 << " pass_threshold " << st.pass_threshold << "\n";
      }
      write_file(cal_out.empty() ? cal_model : cal_out, save_cascade(model));
    } else if (*evalc) {
      const auto model = load_cascade(read_file(eval_model));
      const auto corpus = corpus::load_corpus(eval_corpus);
      const auto feats = corpus::extract_split(corpus, corpus::Split::kEval);
      const auto set = corpus::make_eval_set(feats);
      const auto roc = eval::roc_sweep(model, set.positives, set.negatives, cfg.threshold_list(),
                                       cfg.sweep_options());
      std::ostringstream ss;
      eval::write_roc_csv(ss, roc);
      write_file(eval_out, ss.str());
    } else if (*compare) {
      std::istringstream a(read_file(cmp_a)), b(read_file(cmp_b));
      const auto report = eval::compare_models(eval::read_roc_csv(a), eval::read_roc_csv(b));
      std::ostringstream ss;
      eval::write_dominance_report(ss, report);
      if (cmp_out.empty()) {
        std::cout << ss.str();
      } else {
        write_file(cmp_out, ss.str());
      }
    } else if (*listen) {
      const auto model = load_cascade(read_file(listen_model));
      StreamConfig sc = cfg.stream_config();
      sc.detection_threshold = listen_threshold;
      write_event_header(std::cout);
      if (listen_stdin) {
        StreamDetector det(model, sc);
        std::vector<char> raw(2 * 80);
        std::vector<double> chunk;
        for (;;) {
          std::cin.read(raw.data(), static_cast<std::streamsize>(raw.size()));
          const auto got = static_cast<std::size_t>(std::cin.gcount()) / 2;
          if (got == 0) break;
          chunk.resize(got);
          for (std::size_t i = 0; i < got; ++i) {
            const auto lo = static_cast<unsigned char>(raw[2 * i]);
            const auto hi = static_cast<unsigned char>(raw[2 * i + 1]);
            chunk[i] = static_cast<std::int16_t>(lo | (hi << 8)) / 32768.0;
          }
          det.push_audio(chunk);
          while (det.can_tick()) {
            if (auto e = det.tick()) {
              write_event(std::cout, *e);
              std::cout.flush();
            }
          }
        }
      } else {
        if (listen_wav.empty()) throw ValidationError("listen needs --wav or --stdin-pcm");
        for (const auto& e : run_file(load_audio(listen_wav), model, sc)) {
          write_event(std::cout, e);
        }
      }
    } else if (*features) {
      const auto clip = load_audio(feat_wav);
      const auto w = default_extractor().extract_window(clip, feat_at);
      write_feature_csv(std::cout, w, default_extractor().config().n_coeffs);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case ErrorKind::kIo: return kExitIo;
      case ErrorKind::kFormat:
      case ErrorKind::kUnsupported: return kExitFormat;
      case ErrorKind::kValidation:
      case ErrorKind::kPrecondition: return kExitValidation;
    }
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
