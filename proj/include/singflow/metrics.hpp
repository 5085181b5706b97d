// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "singflow/rewards.hpp"
#include "singflow/signal.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace singflow {

/// Pearson correlation of log-f0 over frames voiced in both contours, x100.
/// `b` is nearest-neighbour resampled to the length of `a` first.
double logf0_pcc(const F0Contour& a, const F0Contour& b);

/// Raw cosine of the two timbre embeddings.
double speaker_similarity(const Waveform& gen, const Waveform& ref, const TimbreEmbedder& embedder);

struct ManifestRow {
  std::string id;
  std::string src;
  std::string ref;
  std::string conv;
  std::string text;
};

/// Tab-separated with a header naming at least id, src, ref, conv (text is
/// optional). src/ref resolve against the manifest's directory.
std::vector<ManifestRow> read_eval_manifest(const std::filesystem::path& path);

struct EvalRow {
  std::string id;
  std::string error;  // non-empty for rows that could not be scored
  double spk_sim = 0.0;
  double logf0pcc = 0.0;
  std::optional<double> cer;
  std::optional<AestheticScore> aesthetics;

  bool ok() const { return error.empty(); }
};

struct EvalReport {
  std::vector<EvalRow> rows;

  std::size_t scored() const;
  double mean_spk_sim() const;
  double mean_logf0pcc() const;
  std::optional<double> mean_cer() const;
  std::optional<AestheticScore> mean_aesthetics() const;
};

struct EvalOptions {
  MelConfig mel;
  F0Config f0;
  const TimbreEmbedder* embedder = nullptr;
  const Transcriber* transcriber = nullptr;  // CER column only when set
  const AestheticScorer* aesthetics = nullptr;
  TokenLevel token_level = TokenLevel::kChar;
};

/// Scores every manifest row; per-row failures become error rows.
EvalReport evaluate(const std::filesystem::path& manifest, const std::filesystem::path& converted_dir,
                    const EvalOptions& options);

/// Header line, one line per row, then a summary line.
std::string report_jsonl(const EvalReport& report);
std::string report_table(const EvalReport& report);

}  // namespace singflow
