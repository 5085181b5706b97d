// SPDX-License-Identifier: Apache-2.0
//
// Selective-timestep GRPO: each prompt gets a group of trajectories sharing
// the initial noise and the stochastic step t'; only the Gaussian transitions
// at t' carry policy gradient.
#pragma once

#include "singflow/optimizer.hpp"
#include "singflow/policy.hpp"
#include "singflow/rewards.hpp"
#include "singflow/sampler.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace singflow {

struct RLConfig {
  int group_size = 8;
  int prompts_per_step = 8;
  double beta = 0.01;
  double lr = 1e-5;
  int iterations = 800;
  double clip_eps = 0.2;
  bool clip = true;
  RewardWeights weights;
  double min_duration = 5.0;  // seconds; shorter prompts are discarded
  int checkpoint_every = 100;
  double aux_flow_weight = 0.0;
  TokenLevel token_level = TokenLevel::kWord;

  void validate() const;
};

/// Velocity of one prompt's conditioned policy and its vector-Jacobian
/// product, both evaluated under an arbitrary parameter snapshot.
struct PromptField {
  std::function<Mat(const Vec& params, const Mat& x, double t)> velocity;
  /// Accumulates (d v / d params)^T grad_v into `grad`.
  std::function<void(const Vec& params, const Mat& x, double t, const Mat& grad_v, Vec& grad)> backward;

  /// Binds a snapshot; the result refers to both `params` and this field.
  VelocityFn at(const Vec& params) const;
};

PromptField bind_policy(const Policy& policy, CondInputs in);

/// Population-standardised totals; std floored at 1e-8.
std::vector<double> group_advantages(std::span<const double> totals);

/// Gaussian transition mean under `params`.
Mat transition_mean(const PromptField& field, const Vec& params, const Transition& tr);
double transition_logprob(const PromptField& field, const Vec& params, const Transition& tr);

/// exp(log pi_theta - log pi_old) summed over the trajectory's stochastic
/// transitions. Throws when the trajectory has none.
double policy_ratio(const PromptField& field, const Trajectory& traj, const Vec& theta, const Vec& theta_old);

/// Equal-variance Gaussian KL: ||mu_theta - mu_ref||^2 / (2 s^2), summed over
/// stochastic transitions.
double kl_penalty(const PromptField& field, const Trajectory& traj, const Vec& theta, const Vec& theta_ref);

struct RolloutGroup {
  std::string prompt_id;
  PromptField field;
  int stoch_step = 0;
  std::uint64_t noise_seed = 0;
  std::vector<Trajectory> trajectories;
  std::vector<RewardVector> rewards;
  std::vector<double> advantages;
};

struct GrpoMetrics {
  int samples = 0;
  double reward_total = 0.0;
  double reward_aesthetic = 0.0;
  double reward_intelligibility = 0.0;
  double reward_speaker = 0.0;
  double ratio_mean = 0.0;
  double ratio_min = 0.0;
  double ratio_max = 0.0;
  double clip_fraction = 0.0;
  double kl = 0.0;
  double advantage_mean = 0.0;
  double advantage_std = 0.0;
  double advantage_abs_mean = 0.0;
  double objective = 0.0;
};

/// Descent gradient: d(-J)/d params with J the mean clipped surrogate minus
/// beta * KL over all group members. Fills `metrics`.
Vec grpo_gradient(std::span<const RolloutGroup> groups, const Vec& params, const Vec& old_params,
                  const Vec& ref_params, const RLConfig& cfg, GrpoMetrics& metrics);

/// One ascent step. A non-finite objective or gradient throws NumericError
/// before any parameter is touched.
GrpoMetrics grpo_update(std::span<const RolloutGroup> groups, Vec& params, const Vec& old_params,
                        const Vec& ref_params, const RLConfig& cfg, const OptimizerConfig& opt,
                        OptimizerState& state, const Vec* extra_grad = nullptr);

struct RLPrompt {
  std::string id;
  PromptField field;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
};

/// Rewards for one group of final states, or nullopt when a scorer is
/// unavailable (the prompt is skipped).
using RewardFn = std::function<std::optional<std::vector<RewardVector>>(const RLPrompt&, std::span<const Mat>)>;

struct RLIteration {
  int iteration = 0;
  int prompts_used = 0;
  int prompts_skipped = 0;
  GrpoMetrics metrics;
};

struct RLLoopHooks {
  /// Extra descent gradient added to the RL step (auxiliary flow loss).
  std::function<std::optional<Vec>(int iteration, const Vec& params)> extra_grad;
  std::function<void(const RLIteration&, const Vec& params, const OptimizerState& state)> on_iteration;
  std::function<void(const std::string& message)> warn;
};

/// Runs iterations [start_iteration, cfg.iterations). theta_old is refreshed
/// at every iteration; `ref_params` stays fixed.
void rl_train_loop(std::span<const RLPrompt> prompts, Vec& params, const Vec& ref_params, const RLConfig& cfg,
                   const SamplerConfig& sampler, const OptimizerConfig& opt, OptimizerState& state,
                   const RewardFn& reward, std::uint64_t seed, int start_iteration = 0, const RLLoopHooks& hooks = {});

}  // namespace singflow
