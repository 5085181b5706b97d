// SPDX-License-Identifier: Apache-2.0
#include "singflow/corpus.hpp"

#include "singflow/core.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace singflow {

namespace {

struct Vowel {
  double f1;
  double f2;
  double f3;
};

constexpr std::array<Vowel, 5> kVowels{{
    {730, 1090, 2440},  // a
    {270, 2290, 3010},  // i
    {300, 870, 2240},   // u
    {530, 1840, 2480},  // e
    {570, 840, 2410},   // o
}};

double formant_gain(double f, const Vowel& v, double warp) {
  auto peak = [&](double center, double bw) {
    const double d = (f - center * warp) / bw;
    return std::exp(-0.5 * d * d);
  };
  return 0.05 + peak(v.f1, 90) + 0.7 * peak(v.f2, 120) + 0.35 * peak(v.f3, 160);
}

double midi_to_hz(double midi) { return 440.0 * std::pow(2.0, (midi - 69.0) / 12.0); }

std::string trim_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

Waveform synth_phrase(const std::vector<double>& midi_notes, double note_seconds, int speaker, int sample_rate,
                      std::uint64_t seed) {
  if (midi_notes.empty() || note_seconds <= 0.0 || sample_rate <= 0) {
    throw ConfigError("synth_phrase: need notes, a positive note length and sample rate");
  }
  Rng rng(seed);
  const double warp = 0.85 + 0.075 * static_cast<double>(speaker % 5);
  const double vib_rate = 5.0 + rng.uniform(0.0, 1.5);
  const double vib_depth = 0.25 + rng.uniform(0.0, 0.2);  // semitones
  const auto note_len = static_cast<std::size_t>(note_seconds * sample_rate);
  const std::size_t n = note_len * midi_notes.size();
  const double nyquist = 0.5 * sample_rate;

  std::vector<std::size_t> vowel_of(midi_notes.size());
  for (auto& v : vowel_of) v = static_cast<std::size_t>(rng.uniform_int(0, kVowels.size() - 1));

  Waveform w{std::vector<float>(n, 0.0F), sample_rate};
  double phase = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t note = i / note_len;
    const double pos = static_cast<double>(i % note_len) / static_cast<double>(note_len);
    const double tsec = static_cast<double>(i) / sample_rate;
    const double midi = midi_notes[note] + vib_depth * std::sin(2.0 * std::numbers::pi * vib_rate * tsec);
    const double f0 = midi_to_hz(midi);
    phase += 2.0 * std::numbers::pi * f0 / sample_rate;
    // 10 % attack, 15 % release per note leaves short breaths between notes.
    const double env = std::clamp(std::min(pos / 0.1, (1.0 - pos) / 0.15), 0.0, 1.0);
    double s = 0.0;
    const Vowel& v = kVowels[vowel_of[note]];
    for (int k = 1; k * f0 < nyquist * 0.95; ++k) {
      s += formant_gain(k * f0, v, warp) / std::sqrt(static_cast<double>(k)) * std::sin(k * phase);
    }
    w.samples[i] = static_cast<float>(0.12 * env * s + 0.002 * rng.normal());
  }
  return w;
}

void make_toy_corpus(const std::filesystem::path& root, const ToyCorpusConfig& cfg) {
  if (cfg.clips <= 0 || cfg.speakers <= 0 || cfg.min_duration <= 0.0 || cfg.max_duration < cfg.min_duration) {
    throw ConfigError("toy corpus: invalid size settings");
  }
  std::filesystem::create_directories(root);
  constexpr std::array<int, 7> kScale{0, 2, 4, 5, 7, 9, 11};
  std::ostringstream manifest;
  manifest << "id\tduration\tlanguage\n";
  for (int c = 0; c < cfg.clips; ++c) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(c)));
    const int speaker = c % cfg.speakers;
    const double base = 55.0 + 3.0 * static_cast<double>(speaker) + static_cast<double>(rng.uniform_int(-2, 2));
    const double duration = rng.uniform(cfg.min_duration, cfg.max_duration);
    const auto notes = static_cast<int>(rng.uniform_int(3, 6));
    const double note_seconds = duration / notes;
    std::vector<double> melody;
    std::int64_t degree = rng.uniform_int(0, 4);
    for (int k = 0; k < notes; ++k) {
      degree = std::clamp<std::int64_t>(degree + rng.uniform_int(-2, 2), 0, 9);
      melody.push_back(base + kScale[degree % 7] + 12 * (degree / 7));
    }
    const double interval = rng.uniform() < 0.5 ? 4.0 : 7.0;
    std::vector<double> harmony;
    for (double m : melody) harmony.push_back(m + interval);
    const std::uint64_t voice_seed = rng.next_u64();

    char id[32];
    std::snprintf(id, sizeof id, "toy%03d", c);
    const Waveform lead = synth_phrase(melody, note_seconds, speaker, cfg.sample_rate, voice_seed);
    const Waveform harm = synth_phrase(harmony, note_seconds, (speaker + 2) % cfg.speakers, cfg.sample_rate,
                                       derive_seed(voice_seed, 1));
    save_wav(lead, root / (std::string(id) + ".lead.wav"));
    save_wav(harm, root / (std::string(id) + ".harm.wav"));
    char line[96];
    std::snprintf(line, sizeof line, "%s\t%.4f\t%s\n", id, lead.duration(), c % 2 == 0 ? "en" : "zh");
    manifest << line;
  }
  std::ofstream out(root / "manifest.tsv", std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write corpus manifest under " + root.string());
  out << manifest.str();
}

std::vector<CorpusEntry> read_corpus_manifest(const std::filesystem::path& root) {
  const auto path = root / "manifest.tsv";
  std::ifstream in(path);
  if (!in) throw DataError("corpus manifest not found: " + path.string());
  std::string line;
  if (!std::getline(in, line) || trim_cr(line).rfind("id\t", 0) != 0) {
    throw DataError("corpus manifest lacks an id/duration/language header: " + path.string());
  }
  std::vector<CorpusEntry> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim_cr(line);
    if (line.empty()) continue;
    std::istringstream ss(line);
    CorpusEntry e;
    std::string dur;
    if (!std::getline(ss, e.id, '\t') || !std::getline(ss, dur, '\t') || e.id.empty()) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected id, duration, language");
    }
    std::getline(ss, e.language, '\t');
    try {
      e.duration = std::stod(dur);
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad duration '" + dur + "'");
    }
    out.push_back(std::move(e));
  }
  if (out.empty()) throw DataError("corpus manifest has no entries: " + path.string());
  return out;
}

std::vector<Clip> load_corpus(const std::filesystem::path& root) {
  std::vector<Clip> clips;
  for (const auto& e : read_corpus_manifest(root)) {
    Clip c;
    c.id = e.id;
    c.language = e.language;
    c.lead = load_wav(root / (e.id + ".lead.wav"));
    const auto harm = root / (e.id + ".harm.wav");
    if (std::filesystem::exists(harm)) c.harm = load_wav(harm);
    clips.push_back(std::move(c));
  }
  return clips;
}

}  // namespace singflow
