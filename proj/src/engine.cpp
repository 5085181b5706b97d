// SPDX-License-Identifier: Apache-2.0
#include "singflow/engine.hpp"

#include "singflow/plugins.hpp"

namespace singflow {

std::unique_ptr<TimbreShifter> make_shifter(const ShifterConfig& cfg) {
  if (cfg.kind == "identity") return std::make_unique<IdentityShifter>();
  if (cfg.kind == "command") return std::make_unique<CommandShifter>(cfg.command, cfg.warp.num_speakers);
  if (cfg.kind == "formant-warp") return std::make_unique<FormantWarpShifter>(cfg.warp);
  throw ConfigError("shifter: unknown kind '" + cfg.kind + "'");
}

AdaptorConfig adaptor_config(const RunConfig& cfg) {
  AdaptorConfig a = cfg.adaptor;
  a.timbre_dim = cfg.features.timbre_dim;
  a.f0_dim = cfg.features.f0_embed.width();
  return a;
}

Policy make_policy(const RunConfig& cfg) {
  ModelConfig m = cfg.model;
  m.mel_channels = cfg.features.mel.n_mels;
  return Policy(m, adaptor_config(cfg), cfg.features.content_dim);
}

RunConfig inherit_architecture(RunConfig stage, const RunConfig& built) {
  stage.features = built.features;
  stage.shifter = built.shifter;
  stage.model = built.model;
  stage.adaptor = built.adaptor;
  stage.eb.scale_mode = built.eb.scale_mode;
  return stage;
}

Engine::Engine(const RunConfig& cfg, const MelNorm& norm, Vec channel_scales)
    : cfg_(cfg),
      shifter_(make_shifter(cfg.shifter)),
      features_(cfg.features, norm, shifter_.get()),
      policy_(make_policy(cfg)),
      eb_(cfg.eb) {
  eb_.channel_scales = std::move(channel_scales);
}

}  // namespace singflow
