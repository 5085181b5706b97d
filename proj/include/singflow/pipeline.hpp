// SPDX-License-Identifier: Apache-2.0
//
// Conversion chain behind `singflow convert`: separate the song, convert the
// lead vocal toward the reference timbre with the ODE sampler, vocode, then
// add the instrumental stem back with gain gamma_inst.
#pragma once

#include "singflow/checkpoint.hpp"
#include "singflow/engine.hpp"
#include "singflow/plugins.hpp"

#include <filesystem>
#include <optional>

namespace singflow {

struct ConvertOptions {
  bool vocal_only = false;
  double transpose = 0.0;  // semitones applied to the source F0 contour
  std::optional<double> gamma_inst;  // overrides infer.gamma_inst
};

struct ConvertResult {
  Waveform vocal;   // converted vocal before recomposition
  Waveform output;  // final render
  Mat mel;          // generated normalised mel of the source frames
  Eigen::Index prompt_frames = 0;
};

/// Effective run config: stage/plugin settings from `user`, architecture from
/// the checkpoint.
RunConfig conversion_config(const RunConfig& user, const Checkpoint& ck);

/// In-memory conversion. `separator` may be null only with vocal_only.
ConvertResult convert(const Checkpoint& ck, const RunConfig& cfg, const Waveform& input, const Waveform& reference,
                      const ConvertOptions& opts, const Separator* separator);

/// Loads the WAVs, picks the separator from the config and writes `output`
/// atomically (float WAV).
ConvertResult convert_files(const std::filesystem::path& checkpoint, const RunConfig& user,
                            const std::filesystem::path& input, const std::filesystem::path& reference,
                            const std::filesystem::path& output, const ConvertOptions& opts);

}  // namespace singflow
