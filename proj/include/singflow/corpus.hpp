// SPDX-License-Identifier: Apache-2.0
//
// Multi-track corpus on disk:
//
//   <root>/manifest.tsv     header "id<TAB>duration<TAB>language"
//   <root>/<id>.lead.wav    clean lead vocal
//   <root>/<id>.harm.wav    backing/harmony track (optional)
#pragma once

#include "singflow/trainer.hpp"

#include <filesystem>
#include <vector>

namespace singflow {

struct CorpusEntry {
  std::string id;
  double duration = 0.0;
  std::string language;
};

std::vector<CorpusEntry> read_corpus_manifest(const std::filesystem::path& root);
/// Loads every manifest entry; a missing harm file leaves `harm` empty.
std::vector<Clip> load_corpus(const std::filesystem::path& root);

struct ToyCorpusConfig {
  int clips = 50;
  int sample_rate = 8000;
  double min_duration = 1.5;
  double max_duration = 3.0;
  int speakers = 5;
  std::uint64_t seed = 2024;
};

/// Synthetic sung phrases: a harmonic source following a short melody with
/// vibrato, shaped by speaker-dependent vowel formants, plus a harmony line a
/// third or fifth above. Deterministic in `cfg.seed`.
void make_toy_corpus(const std::filesystem::path& root, const ToyCorpusConfig& cfg);

/// One synthetic phrase (exposed for tests).
Waveform synth_phrase(const std::vector<double>& midi_notes, double note_seconds, int speaker, int sample_rate,
                      std::uint64_t seed);

}  // namespace singflow
