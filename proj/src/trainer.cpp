// SPDX-License-Identifier: Apache-2.0
#include "singflow/trainer.hpp"

#include <cmath>

namespace singflow {

namespace {

// Stream tags for per-example substreams.
constexpr std::uint64_t kShiftStream = 0x5401;
constexpr std::uint64_t kAugStream = 0x5402;
constexpr std::uint64_t kDrawStream = 0x5403;

}  // namespace

void SftConfig::validate() const {
  perturb.validate();
  if (!(alpha_min >= 0.0 && alpha_min <= alpha_max)) throw ConfigError("sft: need 0 <= alpha_min <= alpha_max");
  if (alpha_fixed && !(*alpha_fixed >= 0.0)) throw ConfigError("sft: alpha must be >= 0");
}

FlowDraw draw_flow(Eigen::Index frames, Eigen::Index channels, Rng& rng) {
  FlowDraw d;
  d.mask = sample_mask(frames, rng);
  d.t = rng.uniform();
  d.epsilon = standard_normal(frames, channels, rng);
  return d;
}

CondInputs condition_inputs(const FlowExample& ex, const MaskPlan& mask) {
  return CondInputs{ex.e_global, ex.h_f0, assemble_content(ex.content_orig, ex.content_shift, mask)};
}

FlowLoss example_flow_loss(const Policy& policy, const Vec& params, const FlowExample& ex, const FlowDraw& draw,
                           const EBWeightConfig& eb, Vec* grad) {
  const CondInputs in = condition_inputs(ex, draw.mask);
  const FlowState state = masked_mel(ex.observed, ex.target, draw.mask, draw.t, draw.epsilon);
  Policy::Cache cache;
  const Mat v = policy.velocity(params, in, state.x_t, draw.t, grad != nullptr ? &cache : nullptr);
  const Mat u = velocity_target(ex.target, draw.epsilon);
  Mat g;
  const FlowLoss loss = eb_flow_loss(v, u, draw.mask, draw.t, eb, grad != nullptr ? &g : nullptr);
  if (!std::isfinite(loss.value)) throw NumericError("non-finite flow loss for sample '" + ex.id + "'");
  if (grad != nullptr && !loss.all_observed) policy.backward(params, cache, g, *grad);
  return loss;
}

BatchLoss batch_flow_loss(const Policy& policy, const Vec& params, std::span<const FlowExample> batch,
                          const EBWeightConfig& eb, std::uint64_t draw_seed, bool want_grad) {
  if (batch.empty()) throw DataError("flow loss: empty batch");
  BatchLoss out;
  if (want_grad) out.grad = Vec::Zero(params.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Rng rng(derive_seed(draw_seed, i));
    const FlowDraw draw = draw_flow(batch[i].frames(), batch[i].target.cols(), rng);
    out.loss += example_flow_loss(policy, params, batch[i], draw, eb, want_grad ? &out.grad : nullptr).value;
  }
  const double n = static_cast<double>(batch.size());
  out.loss /= n;
  if (want_grad) out.grad /= n;
  return out;
}

StepResult apply_flow_step(const Policy& policy, TrainState& state, std::span<const FlowExample> batch,
                           const EBWeightConfig& eb, const OptimizerConfig& opt, std::uint64_t draw_seed) {
  BatchLoss bl = batch_flow_loss(policy, state.params, batch, eb, draw_seed, true);
  if (!bl.grad.allFinite()) throw NumericError("non-finite gradient at step " + std::to_string(state.step));
  StepResult r;
  r.loss = bl.loss;
  r.lr = optimizer_step(opt, state.opt, state.params, bl.grad);
  ++state.step;
  return r;
}

std::vector<FlowExample> cpt_examples(const FeaturePipeline& features, std::span<const Clip* const> clips,
                                      std::uint64_t seed) {
  std::vector<FlowExample> out;
  out.reserve(clips.size());
  for (std::size_t i = 0; i < clips.size(); ++i) {
    Rng shift(derive_seed(seed, i, kShiftStream));
    out.push_back(features.example(clips[i]->id, clips[i]->lead, shift));
  }
  return out;
}

std::vector<FlowExample> sft_examples(const FeaturePipeline& features, std::span<const Clip* const> clips,
                                      const SftConfig& sft, std::uint64_t seed) {
  sft.validate();
  std::vector<FlowExample> out;
  out.reserve(clips.size());
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const Clip& clip = *clips[i];
    Rng shift(derive_seed(seed, i, kShiftStream));
    Rng aug(derive_seed(seed, i, kAugStream));
    double alpha = 0.0;
    if (sft.contamination) alpha = sft.alpha_fixed ? *sft.alpha_fixed : aug.uniform(sft.alpha_min, sft.alpha_max);
    const Waveform* harm = clip.harm ? &*clip.harm : nullptr;
    out.push_back(features.contaminated(clip.id, clip.lead, harm, alpha, &sft.perturb, shift, aug));
  }
  return out;
}

std::uint64_t flow_draw_seed(std::uint64_t step_seed) { return derive_seed(step_seed, kDrawStream); }

StepResult train_step_cpt(const FeaturePipeline& features, const Policy& policy, TrainState& state,
                          std::span<const Clip* const> clips, const EBWeightConfig& eb, const OptimizerConfig& opt,
                          std::uint64_t step_seed) {
  const auto batch = cpt_examples(features, clips, step_seed);
  return apply_flow_step(policy, state, batch, eb, opt, flow_draw_seed(step_seed));
}

StepResult train_step_sft(const FeaturePipeline& features, const Policy& policy, TrainState& state,
                          std::span<const Clip* const> clips, const SftConfig& sft, const EBWeightConfig& eb,
                          const OptimizerConfig& opt, std::uint64_t step_seed) {
  const auto batch = sft_examples(features, clips, sft, step_seed);
  return apply_flow_step(policy, state, batch, eb, opt, flow_draw_seed(step_seed));
}

Vec channel_scales_from(std::span<const FlowExample> examples, std::uint64_t seed, ScaleMode mode) {
  ChannelScaleEstimator est;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    Rng rng(derive_seed(seed, i));
    const Mat& m = examples[i].target;
    est.add(velocity_target(m, standard_normal(m.rows(), m.cols(), rng)));
  }
  return est.finish(mode);
}

}  // namespace singflow
