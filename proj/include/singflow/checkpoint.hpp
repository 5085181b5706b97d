// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container:
//
//   bytes 0..7    magic "SFCKPT\0\1"
//   bytes 8..11   format version (uint32, little endian)
//   bytes 12..19  header length H (uint64, little endian)
//   H bytes       UTF-8 JSON header
//   payload       float64 little endian: params, optimizer first moment,
//                 optimizer second moment (lengths given in the header)
//
// The header carries the run config that built the model, the mel
// normalisation, the EB channel scales, the stage name and step counters.
#pragma once

#include "singflow/config.hpp"
#include "singflow/features.hpp"
#include "singflow/optimizer.hpp"

#include <filesystem>
#include <string>

namespace singflow {

constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  std::string stage = "init";  // init | cpt | sft | rl
  std::int64_t step = 0;       // completed steps (iterations for rl) in `stage`
  MelNorm norm;
  Vec channel_scales;
  Vec params;
  OptimizerState opt;
};

/// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws DataError for missing, truncated or malformed files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Writes `bytes` atomically (temporary sibling + rename).
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace singflow
