// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: one JSON document, every field optional, unknown keys
// rejected. Environment variables SINGFLOW_<SECTION>__<KEY>=<json> override
// individual fields (the value is parsed as JSON, falling back to a string).
#pragma once

#include "singflow/adaptor.hpp"
#include "singflow/eb_loss.hpp"
#include "singflow/encoders.hpp"
#include "singflow/features.hpp"
#include "singflow/grpo.hpp"
#include "singflow/optimizer.hpp"
#include "singflow/sampler.hpp"
#include "singflow/trainer.hpp"
#include "singflow/velocity_model.hpp"

#include "json.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace singflow {

using Json = nlohmann::ordered_json;

struct ShifterConfig {
  std::string kind = "formant-warp";  // formant-warp | identity | command
  FormantWarpConfig warp;
  std::string command;  // used when kind == command
};

struct StageConfig {
  int steps = 0;
  int batch_size = 80;
  int checkpoint_every = 1000;
  int log_every = 1;
};

struct InferConfig {
  int prompt_frames = 0;
  bool shift_content = true;
  int vocoder_iters = 32;
  double gamma_inst = 1.0;
};

/// Subprocess command templates; empty disables the plugin.
struct PluginConfig {
  std::string separator;
  std::string aesthetic;
  std::string asr;
  std::string embedder;
  double aesthetic_min = 1.0;
  double aesthetic_max = 10.0;
};

struct RunConfig {
  std::uint64_t seed = 0;
  FeatureConfig features;
  ShifterConfig shifter;
  ModelConfig model;  // cond_dim is derived, not configured
  AdaptorConfig adaptor;
  EBWeightConfig eb;
  OptimizerConfig optimizer;
  StageConfig cpt{60000, 80, 1000, 1};
  StageConfig sft{15000, 80, 1000, 1};
  SftConfig sft_aug;
  int scale_examples = 64;  // clips used to estimate mel norm and sigma_c
  SamplerConfig sampler;
  RLConfig rl;
  int rl_vocoder_iters = 8;
  InferConfig infer;
  PluginConfig plugins;
  std::string corpus;

  void validate() const;
};

Json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const Json& j);

/// Applies SINGFLOW_* overrides from `env` (name -> value) to `j`.
void apply_env_overrides(Json& j, const std::map<std::string, std::string>& env);
std::map<std::string, std::string> environment_overrides();

/// Reads the file (or defaults when `path` is empty), applies the process
/// environment, validates.
RunConfig load_run_config(const std::filesystem::path& path);

/// Full-scale defaults shrunk for the generated toy corpus.
RunConfig toy_run_config();

}  // namespace singflow
