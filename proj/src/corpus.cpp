#include "kws/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "kws/errors.hpp"
#include "kws/rng.hpp"
#include "kws/text.hpp"

namespace kws::corpus {

std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kEval: return "eval";
    case Split::kUnassigned: return "none";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "eval") return Split::kEval;
  if (s == "none") return Split::kUnassigned;
  throw FormatError("unknown split '" + std::string(s) + "'");
}

std::string ManifestEntry::clip_id() const { return std::filesystem::path(path).stem().string(); }

void SynthParams::validate() const {
  if (n_speakers <= 0 || utterances_per_speaker <= 0 || !(neg_hours > 0.0) ||
      negative_sources <= 0 || !(negative_clip_s >= 1.0)) {
    throw ValidationError("corpus counts and durations must be positive");
  }
  if (min_snr_db > max_snr_db || min_keyword_ms < 100 || min_keyword_ms > max_keyword_ms) {
    throw ValidationError("invalid SNR or keyword duration range");
  }
}

namespace {

constexpr double kRate = kNarrowBandRate;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Voice {
  double f0 = 120.0;
  double formant_scale = 1.0;
  double rate = 1.0;
  double breath = 0.05;
};

Voice random_voice(Rng& rng) {
  Voice v;
  v.f0 = uniform(rng, 85.0, 250.0);
  v.formant_scale = uniform(rng, 0.88, 1.12);
  v.rate = uniform(rng, 0.85, 1.15);
  v.breath = uniform(rng, 0.02, 0.12);
  return v;
}

struct Formants {
  double f[3];
};

/// One syllable: linear formant and pitch glides under a raised-cosine
/// envelope.
struct Syllable {
  Formants from;
  Formants to;
  double pitch_from = 1.0;  // multiples of the voice's f0
  double pitch_to = 1.0;
};

// Two-syllable keyword contour.
constexpr Syllable kKeywordA{{{600, 1000, 2500}}, {{450, 2000, 2700}}, 1.0, 1.25};
constexpr Syllable kKeywordB{{{300, 2300, 3000}}, {{700, 1200, 2450}}, 1.15, 0.8};

// Two-pole resonator (Klatt form) with unity DC gain.
class Resonator {
 public:
  void set(double freq, double bw) {
    const double r = std::exp(-std::numbers::pi * bw / kRate);
    c_ = -r * r;
    b_ = 2.0 * r * std::cos(kTwoPi * freq / kRate);
    a_ = 1.0 - b_ - c_;
  }
  double step(double x) {
    const double y = a_ * x + b_ * y1_ + c_ * y2_;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  double a_ = 1.0, b_ = 0.0, c_ = 0.0, y1_ = 0.0, y2_ = 0.0;
};

// Renders a syllable of n samples into out[offset...), scaled to unit peak
// envelope before `gain`.
void render_syllable(std::vector<double>& out, std::size_t offset, std::size_t n,
                     const Syllable& s, const Voice& v, double gain, Rng& rng) {
  constexpr double kBw[3] = {90.0, 110.0, 160.0};
  Resonator res[3];
  double phase = uniform(rng);
  double glottal = 0.0;
  std::vector<double> buf(n);
  double peak = 1e-12;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = n > 1 ? static_cast<double>(i) / (n - 1) : 0.0;
    if (i % 40 == 0) {
      for (int k = 0; k < 3; ++k) {
        const double f = (s.from.f[k] + (s.to.f[k] - s.from.f[k]) * u) * v.formant_scale;
        res[k].set(std::min(f, 3800.0), kBw[k]);
      }
    }
    const double f0 = v.f0 * (s.pitch_from + (s.pitch_to - s.pitch_from) * u);
    phase += f0 / kRate;
    double pulse = 0.0;
    if (phase >= 1.0) {
      phase -= 1.0;
      pulse = 1.0;
    }
    glottal = 0.92 * glottal + pulse;
    double x = glottal + v.breath * gaussian(rng);
    for (auto& r : res) x = r.step(x);
    buf[i] = x;
  }
  // Normalize the voiced signal then apply the envelope.
  for (double x : buf) peak = std::max(peak, std::abs(x));
  for (std::size_t i = 0; i < n; ++i) {
    const double u = n > 1 ? static_cast<double>(i) / (n - 1) : 0.0;
    const double env = u < 0.2   ? 0.5 - 0.5 * std::cos(std::numbers::pi * u / 0.2)
                       : u > 0.8 ? 0.5 - 0.5 * std::cos(std::numbers::pi * (1.0 - u) / 0.2)
                                 : 1.0;
    if (offset + i < out.size()) out[offset + i] += gain * env * buf[i] / peak;
  }
}

std::size_t ms_to_samples(double ms) { return static_cast<std::size_t>(ms * kRate / 1000.0); }

Syllable random_syllable(Rng& rng) {
  Syllable s;
  for (int k = 0; k < 3; ++k) {
    constexpr double lo[3] = {250, 800, 2100};
    constexpr double hi[3] = {850, 2500, 3300};
    s.from.f[k] = uniform(rng, lo[k], hi[k]);
    s.to.f[k] = uniform(rng, lo[k], hi[k]);
  }
  s.pitch_from = uniform(rng, 0.8, 1.3);
  s.pitch_to = uniform(rng, 0.8, 1.3);
  return s;
}

// Per-utterance variation of the formant targets.
Syllable jitter(Syllable s, double amount, Rng& rng) {
  for (int k = 0; k < 3; ++k) {
    s.from.f[k] *= 1.0 + amount * gaussian(rng);
    s.to.f[k] *= 1.0 + amount * gaussian(rng);
  }
  return s;
}

// alpha = 0 gives a, alpha = 1 gives b.
Syllable blend(const Syllable& a, const Syllable& b, double alpha) {
  Syllable s;
  for (int k = 0; k < 3; ++k) {
    s.from.f[k] = a.from.f[k] + alpha * (b.from.f[k] - a.from.f[k]);
    s.to.f[k] = a.to.f[k] + alpha * (b.to.f[k] - a.to.f[k]);
  }
  s.pitch_from = a.pitch_from + alpha * (b.pitch_from - a.pitch_from);
  s.pitch_to = a.pitch_to + alpha * (b.pitch_to - a.pitch_to);
  return s;
}

// Two-syllable word of total duration `dur_ms` at `offset`.
void render_word(std::vector<double>& out, std::size_t offset, double dur_ms, const Syllable& a,
                 const Syllable& b, const Voice& v, double gain, Rng& rng) {
  const double split = std::clamp(0.45 * v.rate, 0.35, 0.55);
  const double gap = 0.06;
  const auto n = ms_to_samples(dur_ms);
  const auto na = static_cast<std::size_t>(n * split);
  const auto ng = static_cast<std::size_t>(n * gap);
  render_syllable(out, offset, na, a, v, gain, rng);
  // Short plosive-like burst in the gap.
  for (std::size_t i = 0; i < ng; ++i) {
    if (offset + na + i < out.size()) {
      out[offset + na + i] += 0.15 * gain * gaussian(rng) * std::exp(-5.0 * i / std::max<std::size_t>(ng, 1));
    }
  }
  render_syllable(out, offset + na + ng, n - na - ng, b, v, gain, rng);
}

void render_keyword(std::vector<double>& out, std::size_t offset, double dur_ms,
                    const Voice& v, double gain, Rng& rng) {
  const auto a = jitter(kKeywordA, 0.06, rng);
  const auto b = jitter(kKeywordB, 0.06, rng);
  render_word(out, offset, dur_ms, a, b, v, gain, rng);
}

// Background noise: white noise through a one-pole low-pass of random
// colour, plus an optional hum.
class Background {
 public:
  Background(Rng& rng, double level) : level_(level) {
    pole_ = uniform(rng, 0.0, 0.95);
    hum_ = uniform(rng) < 0.3 ? uniform(rng, 0.1, 0.5) : 0.0;
    hum_hz_ = uniform(rng, 50.0, 180.0);
  }
  void add(std::vector<double>& out, Rng& rng) {
    const double norm = std::sqrt(1.0 - pole_ * pole_);
    for (std::size_t i = 0; i < out.size(); ++i) {
      state_ = pole_ * state_ + norm * gaussian(rng);
      double x = state_;
      if (hum_ > 0.0) x += hum_ * std::sin(kTwoPi * hum_hz_ * i / kRate) * 1.41;
      out[i] += level_ * x;
    }
  }

 private:
  double level_;
  double pole_ = 0.0;
  double hum_ = 0.0;
  double hum_hz_ = 60.0;
  double state_ = 0.0;
};

double rms(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return x.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(x.size()));
}

void limit(std::vector<double>& x) {
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (peak > 0.95) {
    for (auto& v : x) v *= 0.95 / peak;
  }
}

AudioClip positive_clip(const std::string& id, Voice v, const SynthParams& p,
                        std::uint64_t seed, mil::Annotation& ann) {
  Rng rng(seed);
  v.f0 *= uniform(rng, 0.9, 1.1);
  const double dur = std::round(uniform(rng, p.min_keyword_ms, p.max_keyword_ms + 1e-9));
  const double pre = std::round(uniform(rng, 600.0, 1000.0) / 10.0) * 10.0;
  const double post = uniform(rng, 1000.0, 1400.0);
  AudioClip clip;
  clip.id = id;
  clip.samples.assign(ms_to_samples(pre + dur + post), 0.0);

  std::vector<double> speech(clip.samples.size(), 0.0);
  const double gain = uniform(rng, 0.15, 0.4);
  render_keyword(speech, ms_to_samples(pre), dur, v, gain, rng);
  const auto span = std::span(speech).subspan(ms_to_samples(pre), ms_to_samples(dur));
  const double snr_db = uniform(rng, p.min_snr_db, p.max_snr_db);
  const double noise_rms = rms(span) / std::pow(10.0, snr_db / 20.0);

  // Occasional babble syllable away from the keyword keeps positive clips
  // from being trivially "the only voiced thing".
  if (uniform(rng) < 0.3) {
    const auto n = ms_to_samples(uniform(rng, 150.0, 300.0));
    const auto at = ms_to_samples(uniform(rng, 0.0, std::max(0.0, pre - 400.0)));
    render_syllable(speech, at, n, random_syllable(rng), v, gain * uniform(rng, 0.3, 0.8), rng);
  }
  Background bg(rng, 1.0);
  std::vector<double> noise(clip.samples.size(), 0.0);
  bg.add(noise, rng);
  const double scale = noise_rms / std::max(rms(noise), 1e-12);
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    clip.samples[i] = speech[i] + scale * noise[i];
  }
  limit(clip.samples);
  ann = {id, static_cast<int>(pre), static_cast<int>(pre + dur), "keyword"};
  return clip;
}

AudioClip negative_clip(const std::string& id, double seconds, double snr_db, Rng& voices,
                        const std::vector<Voice>& speakers, std::uint64_t seed) {
  Rng rng(seed);
  AudioClip clip;
  clip.id = id;
  clip.samples.assign(ms_to_samples(seconds * 1000.0), 0.0);
  const Voice local = random_voice(voices);

  double t = uniform(rng, 0.0, 1500.0);
  const double end = seconds * 1000.0;
  while (t < end - 200.0) {
    const double kind = uniform(rng);
    const double gain = uniform(rng, 0.15, 0.4);
    Voice v = !speakers.empty() && uniform(rng) < 0.6
                  ? speakers[uniform_index(rng, speakers.size())]
                  : local;
    v.f0 *= uniform(rng, 0.9, 1.1);
    double used = 0.0;
    if (kind < 0.3) {
      // Babble: a run of random syllables.
      const int count = 1 + static_cast<int>(uniform_index(rng, 4));
      for (int k = 0; k < count; ++k) {
        const double d = uniform(rng, 120.0, 350.0);
        render_syllable(clip.samples, ms_to_samples(t + used), ms_to_samples(d),
                        random_syllable(rng), v, gain, rng);
        used += d + uniform(rng, 20.0, 120.0);
      }
    } else if (kind < 0.6) {
      // Near miss: a two-syllable word partway between the keyword and a
      // random word.
      const double d = uniform(rng, 300.0, 900.0);
      const double u = uniform(rng);
      const double alpha = 0.3 + 0.4 * u;
      const double beta = uniform(rng) < 0.7 ? alpha : uniform(rng, 0.0, 1.0);
      render_word(clip.samples, ms_to_samples(t), d, blend(kKeywordA, random_syllable(rng), alpha),
                  blend(kKeywordB, random_syllable(rng), beta), v, gain, rng);
      used = d;
    } else if (kind < 0.8) {
      // Confusable: one keyword syllable alone or both in reverse order.
      const double d = uniform(rng, 150.0, 450.0);
      const double which = uniform(rng);
      if (which < 0.4) {
        render_syllable(clip.samples, ms_to_samples(t), ms_to_samples(d), kKeywordA, v, gain, rng);
        used = d;
      } else if (which < 0.8) {
        render_syllable(clip.samples, ms_to_samples(t), ms_to_samples(d), kKeywordB, v, gain, rng);
        used = d;
      } else {
        render_syllable(clip.samples, ms_to_samples(t), ms_to_samples(d), kKeywordB, v, gain, rng);
        const double d2 = uniform(rng, 150.0, 450.0);
        render_syllable(clip.samples, ms_to_samples(t + d + 30.0), ms_to_samples(d2), kKeywordA,
                        v, gain, rng);
        used = d + 30.0 + d2;
      }
    } else if (kind < 0.9) {
      // Band-limited noise burst.
      const double d = uniform(rng, 80.0, 500.0);
      Resonator r;
      r.set(uniform(rng, 300.0, 3500.0), uniform(rng, 100.0, 800.0));
      const auto n = ms_to_samples(d);
      const auto at = ms_to_samples(t);
      for (std::size_t i = 0; i < n && at + i < clip.samples.size(); ++i) {
        const double env = std::sin(std::numbers::pi * i / n);
        clip.samples[at + i] += 0.5 * gain * env * r.step(gaussian(rng));
      }
      used = d;
    } else {
      used = uniform(rng, 500.0, 2000.0);  // silence
    }
    t += used + uniform(rng, 150.0, 1500.0);
  }
  // Noise level relative to a mid-gain keyword in this voice, on the same
  // SNR scale as the positive clips.
  std::vector<double> ref(ms_to_samples(600.0), 0.0);
  Rng ref_rng(seed ^ 0x726566);
  render_keyword(ref, 0, 600.0, local, 0.27, ref_rng);
  std::vector<double> noise(clip.samples.size(), 0.0);
  Background bg(rng, 1.0);
  bg.add(noise, rng);
  const double scale = rms(ref) / std::pow(10.0, snr_db / 20.0) / std::max(rms(noise), 1e-12);
  for (std::size_t i = 0; i < noise.size(); ++i) clip.samples[i] += scale * noise[i];
  limit(clip.samples);
  return clip;
}

std::string two_digits(int v, int width = 2) {
  std::string s = std::to_string(v);
  return std::string(std::max(0, width - static_cast<int>(s.size())), '0') + s;
}

}  // namespace

Corpus synth_corpus(const SynthParams& p) {
  p.validate();
  Corpus c;
  const int n_neg = std::max(
      p.negative_sources,
      static_cast<int>(std::ceil(p.neg_hours * 3600.0 / p.negative_clip_s)));

  // Lay out and split the manifest first so keyword-free speech can reuse
  // the voices of speakers on the same side of the split.
  std::vector<Voice> voices;
  for (int s = 0; s < p.n_speakers; ++s) {
    Rng vr(derive_seed(p.seed, static_cast<std::uint64_t>(s), 0x766f6963));
    voices.push_back(random_voice(vr));
    const std::string spk = "spk" + two_digits(s);
    for (int u = 0; u < p.utterances_per_speaker; ++u) {
      const std::string id = "pos_" + spk + "_u" + two_digits(u, 3);
      c.manifest.entries.push_back({"audio/" + id + ".wav", spk, Split::kUnassigned, {{id, 0, 0}}});
    }
  }
  for (int k = 0; k < n_neg; ++k) {
    const std::string srcid = "bg" + two_digits(k % p.negative_sources);
    const std::string id = "neg_" + srcid + "_c" + two_digits(k / p.negative_sources, 3);
    c.manifest.entries.push_back({"audio/" + id + ".wav", srcid, Split::kUnassigned, {}});
  }
  c.manifest = stratified_split(std::move(c.manifest), 0.8, p.seed);

  std::map<Split, std::vector<Voice>> pool;
  for (int s = 0; s < p.n_speakers; ++s) {
    pool[c.manifest.entries[static_cast<std::size_t>(s) * p.utterances_per_speaker].split]
        .push_back(voices[s]);
  }

  for (int s = 0; s < p.n_speakers; ++s) {
    for (int u = 0; u < p.utterances_per_speaker; ++u) {
      auto& e = c.manifest.entries[c.clips.size()];
      c.clips.push_back(positive_clip(
          e.clip_id(), voices[s], p,
          derive_seed(p.seed, static_cast<std::uint64_t>(s) * 100000 + u, 0x706f73),
          e.annotations[0]));
    }
  }
  for (int k = 0; k < n_neg; ++k) {
    auto& e = c.manifest.entries[c.clips.size()];
    const int src = k % p.negative_sources;
    Rng sr(derive_seed(p.seed, static_cast<std::uint64_t>(src), 0x737263));
    Rng local(derive_seed(p.seed, static_cast<std::uint64_t>(k), 0x6e766f));
    const double snr = std::clamp(uniform(sr, p.min_snr_db, p.max_snr_db) + 2.0 * gaussian(local),
                                  p.min_snr_db, p.max_snr_db);
    const double seconds = std::min(p.negative_clip_s, p.neg_hours * 3600.0 / n_neg);
    c.clips.push_back(negative_clip(e.clip_id(), std::max(seconds, 1.0), snr, local,
                                    pool[e.split],
                                    derive_seed(p.seed, static_cast<std::uint64_t>(k), 0x6e6567)));
  }

  // Quantize to the 16-bit grid read_wav produces, so in-memory and on-disk
  // corpora are identical.
  for (auto& clip : c.clips) {
    const auto pcm = to_pcm16(clip.samples);
    for (std::size_t i = 0; i < pcm.size(); ++i) clip.samples[i] = pcm[i] / 32768.0;
  }
  return c;
}

CorpusManifest stratified_split(CorpusManifest m, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ValidationError("train fraction must be in (0, 1)");
  }
  // Keyword-bearing speakers and keyword-free sources are separate pools.
  std::set<std::string> pools[2];
  for (const auto& e : m.entries) pools[e.keyword_free() ? 1 : 0].insert(e.speaker_id);
  for (const auto& s : pools[0]) {
    if (pools[1].count(s)) {
      throw ValidationError("speaker " + s + " has both keyword and keyword-free clips");
    }
  }

  std::map<std::string, Split> assign;
  for (int k = 0; k < 2; ++k) {
    if (pools[k].empty()) continue;
    std::vector<std::string> ids(pools[k].begin(), pools[k].end());
    const char* what = k == 0 ? "speakers" : "background sources";
    if (ids.size() < 5) {
      throw ValidationError(std::string("need at least 5 ") + what + ", found " +
                            std::to_string(ids.size()));
    }
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k), 0x73706c74));
    for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[uniform_index(rng, i)]);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * ids.size()));
    if (n_train < 2 || ids.size() - n_train < 2) {
      throw ValidationError(std::string("split leaves fewer than 2 ") + what + " in " +
                            (n_train < 2 ? "train" : "eval"));
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
      assign[ids[i]] = i < n_train ? Split::kTrain : Split::kEval;
    }
  }
  for (auto& e : m.entries) e.split = assign.at(e.speaker_id);
  m.seed = seed;
  return m;
}

std::vector<FeatureWindow> sample_negative_windows(const Corpus& corpus, Split split,
                                                   std::size_t count, std::uint64_t seed) {
  std::vector<ClipFeatures> repo;
  std::size_t population = 0;
  for (std::size_t i = 0; i < corpus.clips.size(); ++i) {
    const auto& e = corpus.manifest.entries[i];
    if (e.split != split || !e.keyword_free()) continue;
    repo.emplace_back(corpus.clips[i], default_extractor());
    population += repo.back().window_count();
  }
  if (count > population) {
    throw ValidationError("need " + std::to_string(count) + " negative windows (" +
                          std::to_string(count * 10) + " ms of window starts) but the " +
                          std::string(to_string(split)) + " split has " +
                          std::to_string(population));
  }
  std::vector<FeatureWindow> out;
  for (const auto& ref : sample_windows(repo, count, seed)) {
    out.push_back(repo[ref.clip].materialize(ref.window));
  }
  return out;
}

void write_manifest_csv(std::ostream& out, const CorpusManifest& m) {
  out << "path,speaker_id,split\n";
  for (const auto& e : m.entries) {
    out << e.path << ',' << e.speaker_id << ',' << to_string(e.split) << '\n';
  }
}

void write_corpus(const Corpus& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "audio");
  // read_wav divides by 32768 but write_wav scales by 32767; stretching
  // first makes each file decode to exactly the in-memory samples.
  for (std::size_t i = 0; i < c.clips.size(); ++i) {
    AudioClip out = c.clips[i];
    for (auto& s : out.samples) s *= 32768.0 / 32767.0;
    write_wav(out, dir / c.manifest.entries[i].path);
  }
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::trunc);
    if (!f) throw IoError("cannot write " + (dir / name).string());
    return f;
  };
  auto mf = open("manifest.csv");
  write_manifest_csv(mf, c.manifest);
  std::vector<mil::Annotation> all;
  for (const auto& e : c.manifest.entries) all.insert(all.end(), e.annotations.begin(), e.annotations.end());
  auto af = open("annotations.csv");
  mil::write_annotations(af, all);
  auto cf = open("corpus.cfg");
  cf << "seed=" << c.manifest.seed << "\n";
}

Corpus load_corpus(const std::filesystem::path& dir) {
  auto open = [&](const char* name) {
    std::ifstream f(dir / name);
    if (!f) throw IoError("cannot open " + (dir / name).string());
    return f;
  };
  Corpus c;
  {
    auto cf = open("corpus.cfg");
    std::string line;
    while (std::getline(cf, line)) {
      if (line.rfind("seed=", 0) == 0) c.manifest.seed = text::parse_int<std::uint64_t>(line.substr(5));
    }
  }
  std::map<std::string, std::vector<mil::Annotation>> by_clip;
  {
    auto af = open("annotations.csv");
    for (auto& a : mil::read_annotations(af)) by_clip[a.clip_id].push_back(a);
  }
  auto mf = open("manifest.csv");
  std::string line;
  if (!std::getline(mf, line) || line.rfind("path,speaker_id,split", 0) != 0) {
    throw FormatError("manifest.csv: missing header");
  }
  while (std::getline(mf, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = text::split(line, ',');
    if (f.size() != 3) throw FormatError("manifest row needs 3 fields: " + line);
    ManifestEntry e{std::string(f[0]), std::string(f[1]), parse_split(f[2]), {}};
    auto it = by_clip.find(e.clip_id());
    if (it != by_clip.end()) e.annotations = it->second;
    AudioClip clip = read_wav(dir / e.path);
    if (clip.sample_rate_hz != kNarrowBandRate) {
      clip = to_narrow_band(clip);
    }
    c.clips.push_back(std::move(clip));
    c.manifest.entries.push_back(std::move(e));
  }
  return c;
}

SplitFeatures extract_split(const Corpus& corpus, Split split) {
  SplitFeatures f;
  for (std::size_t i = 0; i < corpus.clips.size(); ++i) {
    const auto& e = corpus.manifest.entries[i];
    if (e.split != split) continue;
    const auto& clip = corpus.clips[i];
    if (e.keyword_free()) {
      f.negative_clips.emplace_back(clip, default_extractor());
      f.negative_duration_ms.push_back(clip.duration_ms());
    } else {
      f.positive_clips.emplace_back(clip, default_extractor());
      f.positive_annotations.push_back(e.annotations);
      f.positive_duration_ms.push_back(clip.duration_ms());
    }
  }
  return f;
}

TrainingSet make_training_set(SplitFeatures features, const Corpus& corpus, Split split,
                              double calibration_fraction) {
  if (!(calibration_fraction >= 0.0 && calibration_fraction < 1.0)) {
    throw ValidationError("calibration fraction must be in [0, 1)");
  }
  // Whole speakers are held out for calibration, chosen by seeded shuffle.
  std::set<std::string> speakers, held_out;
  for (const auto& e : corpus.manifest.entries) {
    if (e.split == split && !e.keyword_free()) speakers.insert(e.speaker_id);
  }
  const auto n_cal = static_cast<std::size_t>(std::llround(calibration_fraction * speakers.size()));
  if (n_cal > 0) {
    if (n_cal >= speakers.size()) throw ValidationError("no speakers left for training");
    std::vector<std::string> ids(speakers.begin(), speakers.end());
    Rng rng(derive_seed(corpus.manifest.seed, 0, 0x63616c));
    for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[uniform_index(rng, i)]);
    held_out.insert(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_cal));
  }

  TrainingSet t;
  const auto& fc = default_extractor().config();
  mil::BagConfig bc;
  bc.window_ms = fc.window_ms;
  bc.stride_ms = fc.stride_ms();
  std::size_t pos_index = 0;
  for (std::size_t i = 0; i < corpus.clips.size(); ++i) {
    const auto& e = corpus.manifest.entries[i];
    if (e.split != split || e.keyword_free()) continue;
    const bool cal = held_out.count(e.speaker_id) > 0;
    for (auto& bag : mil::make_bags(corpus.clips[i], e.annotations, bc)) {
      if (bag.label != mil::BagLabel::kPositive) continue;
      (cal ? t.calibration_bags : t.positive_bags).push_back(std::move(bag));
      (cal ? t.calibration_bag_clip : t.bag_clip).push_back(pos_index);
    }
    ++pos_index;
  }
  if (pos_index != features.positive_clips.size()) {
    throw ValidationError("features do not match the corpus split");
  }
  t.positive_clips = std::move(features.positive_clips);
  t.negative_repository = std::move(features.negative_clips);
  return t;
}

EvalSet make_eval_set(const SplitFeatures& f) {
  EvalSet s;
  for (std::size_t i = 0; i < f.positive_clips.size(); ++i) {
    s.positives.push_back({&f.positive_clips[i], f.positive_duration_ms[i], f.positive_annotations[i]});
  }
  for (std::size_t i = 0; i < f.negative_clips.size(); ++i) {
    s.negatives.push_back({&f.negative_clips[i], f.negative_duration_ms[i], {}});
  }
  return s;
}

}  // namespace kws::corpus
