// SPDX-License-Identifier: Apache-2.0
//
// Stage runners behind `singflow train`. Each stage writes
//
//   <out>/<stage>.ckpt            checkpoint (rewritten every checkpoint_every
//                                 steps and at the end)
//   <out>/<stage>.metrics.jsonl   one JSON object per logged step/iteration
//
// CPT and SFT share one optimiser state and one global step counter, so an SFT
// run with augmentation off continues exactly like more CPT steps would. RL
// starts a fresh optimiser state at its own fixed learning rate.
#pragma once

#include "singflow/checkpoint.hpp"
#include "singflow/config.hpp"
#include "singflow/engine.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace singflow {

enum class Stage { kCpt, kSft, kRl };
Stage parse_stage(const std::string& s);
std::string to_string(Stage s);

struct TrainRequest {
  Stage stage = Stage::kCpt;
  RunConfig config;
  std::filesystem::path init_checkpoint;  // required for sft and rl
  std::filesystem::path out_dir;
  bool resume = false;  // continue from <out>/<stage>.ckpt when present
};

struct TrainOutcome {
  std::filesystem::path checkpoint;
  std::filesystem::path metrics;
  std::int64_t steps_run = 0;
  double last_loss = 0.0;  // last flow loss (cpt/sft) or mean reward (rl)
};

using LogSink = std::function<void(const std::string&)>;

TrainOutcome run_training(const TrainRequest& req, const LogSink& log = {});

std::filesystem::path stage_checkpoint_path(const std::filesystem::path& out_dir, Stage s);
std::filesystem::path stage_metrics_path(const std::filesystem::path& out_dir, Stage s);

/// Clips whose sample rate differs from the mel config raise DataError.
void check_sample_rates(const std::vector<Clip>& clips, int sample_rate);

/// Mel normalisation and EB channel scales from the first `cfg.scale_examples`
/// clips, then a fresh parameter vector.
Checkpoint initial_checkpoint(const RunConfig& cfg, const std::vector<Clip>& clips);

/// Conditions for converting `source` toward the timbre of `reference` with
/// nothing observed; `shift_seed` picks the shifter speaker.
CondInputs conversion_inputs(const FeaturePipeline& features, const Waveform& source, const Waveform& reference,
                             bool shift_content, std::uint64_t shift_seed, double transpose = 0.0);

}  // namespace singflow
