// SPDX-License-Identifier: Apache-2.0
//
// Everything needed to run the conditioned velocity field for one run config:
// the shifter, feature pipeline, policy and EB weighting.
#pragma once

#include "singflow/checkpoint.hpp"
#include "singflow/config.hpp"
#include "singflow/features.hpp"
#include "singflow/policy.hpp"

#include <memory>

namespace singflow {

std::unique_ptr<TimbreShifter> make_shifter(const ShifterConfig& cfg);

AdaptorConfig adaptor_config(const RunConfig& cfg);
Policy make_policy(const RunConfig& cfg);

/// `stage` with the architecture (features, shifter, model, adaptor, EB scale
/// mode) replaced by the one a checkpoint was built with.
RunConfig inherit_architecture(RunConfig stage, const RunConfig& built);

class Engine {
 public:
  Engine(const RunConfig& cfg, const MelNorm& norm, Vec channel_scales);
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  const RunConfig& config() const { return cfg_; }
  const FeaturePipeline& features() const { return features_; }
  const Policy& policy() const { return policy_; }
  const EBWeightConfig& eb() const { return eb_; }
  void set_channel_scales(Vec scales) { eb_.channel_scales = std::move(scales); }

 private:
  RunConfig cfg_;
  std::unique_ptr<TimbreShifter> shifter_;
  FeaturePipeline features_;
  Policy policy_;
  EBWeightConfig eb_;
};

}  // namespace singflow
