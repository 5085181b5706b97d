// SPDX-License-Identifier: Apache-2.0
//
// Flow-matching training steps. Randomness is split into independent streams
// per example (timbre shift, augmentation, mask/t/noise) so that an SFT step
// with contamination and perturbation switched off draws exactly the numbers
// a CPT step would.
#pragma once

#include "singflow/augment.hpp"
#include "singflow/eb_loss.hpp"
#include "singflow/features.hpp"
#include "singflow/optimizer.hpp"
#include "singflow/policy.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace singflow {

struct Clip {
  std::string id;
  Waveform lead;
  std::optional<Waveform> harm;
  std::string language;
};

struct SftConfig {
  PerturbConfig perturb;
  bool contamination = true;
  double alpha_min = 0.2;
  double alpha_max = 0.6;
  std::optional<double> alpha_fixed;

  void validate() const;
};

/// One (mask, t, noise) draw for a T x C example, in that order.
struct FlowDraw {
  MaskPlan mask;
  double t = 0.0;
  Mat epsilon;
};

FlowDraw draw_flow(Eigen::Index frames, Eigen::Index channels, Rng& rng);

/// Condition inputs with content assembled under `mask`.
CondInputs condition_inputs(const FlowExample& ex, const MaskPlan& mask);

/// EB flow loss of one example; accumulates dLoss/dparams into `grad`.
FlowLoss example_flow_loss(const Policy& policy, const Vec& params, const FlowExample& ex, const FlowDraw& draw,
                           const EBWeightConfig& eb, Vec* grad = nullptr);

struct BatchLoss {
  double loss = 0.0;
  Vec grad;  // empty unless requested
};

/// Mean loss over the batch; example i uses draw stream derive_seed(seed, i).
BatchLoss batch_flow_loss(const Policy& policy, const Vec& params, std::span<const FlowExample> batch,
                          const EBWeightConfig& eb, std::uint64_t draw_seed, bool want_grad);

struct TrainState {
  Vec params;
  OptimizerState opt;
  std::int64_t step = 0;
};

struct StepResult {
  double loss = 0.0;
  double lr = 0.0;
};

/// One optimiser step on prepared examples. A non-finite loss throws
/// NumericError naming the offending example and leaves `state` untouched.
StepResult apply_flow_step(const Policy& policy, TrainState& state, std::span<const FlowExample> batch,
                           const EBWeightConfig& eb, const OptimizerConfig& opt, std::uint64_t draw_seed);

std::vector<FlowExample> cpt_examples(const FeaturePipeline& features, std::span<const Clip* const> clips,
                                      std::uint64_t seed);
std::vector<FlowExample> sft_examples(const FeaturePipeline& features, std::span<const Clip* const> clips,
                                      const SftConfig& sft, std::uint64_t seed);

/// Draw stream used by the steps below for a given step seed.
std::uint64_t flow_draw_seed(std::uint64_t step_seed);

StepResult train_step_cpt(const FeaturePipeline& features, const Policy& policy, TrainState& state,
                          std::span<const Clip* const> clips, const EBWeightConfig& eb, const OptimizerConfig& opt,
                          std::uint64_t step_seed);
StepResult train_step_sft(const FeaturePipeline& features, const Policy& policy, TrainState& state,
                          std::span<const Clip* const> clips, const SftConfig& sft, const EBWeightConfig& eb,
                          const OptimizerConfig& opt, std::uint64_t step_seed);

/// Per-channel scales of u = eps - m over the given examples, one noise draw
/// per example from `seed`.
Vec channel_scales_from(std::span<const FlowExample> examples, std::uint64_t seed, ScaleMode mode);

}  // namespace singflow
