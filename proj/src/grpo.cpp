// SPDX-License-Identifier: Apache-2.0
#include "singflow/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace singflow {

namespace {

constexpr std::uint64_t kIterationStream = 0x6B01;
constexpr std::uint64_t kNoiseStream = 0x6B02;
constexpr double kAdvantageStdFloor = 1e-8;

double transition_log_ratio(const PromptField& field, const Trajectory& traj, const Vec& theta,
                            const Vec& theta_old) {
  double log_ratio = 0.0;
  for (const Transition& tr : traj.transitions) {
    log_ratio += transition_logprob(field, theta, tr) - transition_logprob(field, theta_old, tr);
  }
  return log_ratio;
}

}  // namespace

void RLConfig::validate() const {
  if (group_size < 2) throw ConfigError("rl: group_size must be >= 2");
  if (prompts_per_step < 1) throw ConfigError("rl: prompts_per_step must be >= 1");
  if (!(beta >= 0.0)) throw ConfigError("rl: beta must be >= 0");
  if (!(lr >= 0.0)) throw ConfigError("rl: lr must be >= 0");
  if (iterations < 0) throw ConfigError("rl: iterations must be >= 0");
  if (!(clip_eps >= 0.0)) throw ConfigError("rl: clip_eps must be >= 0");
  if (checkpoint_every < 1) throw ConfigError("rl: checkpoint_every must be >= 1");
  if (!(aux_flow_weight >= 0.0)) throw ConfigError("rl: aux_flow_weight must be >= 0");
}

VelocityFn PromptField::at(const Vec& params) const {
  return [this, &params](const Mat& x, double t) { return velocity(params, x, t); };
}

PromptField bind_policy(const Policy& policy, CondInputs in) {
  auto shared = std::make_shared<const CondInputs>(std::move(in));
  PromptField f;
  f.velocity = [&policy, shared](const Vec& params, const Mat& x, double t) {
    return policy.velocity(params, *shared, x, t);
  };
  f.backward = [&policy, shared](const Vec& params, const Mat& x, double t, const Mat& grad_v, Vec& grad) {
    Policy::Cache cache;
    policy.velocity(params, *shared, x, t, &cache);
    policy.backward(params, cache, grad_v, grad);
  };
  return f;
}

std::vector<double> group_advantages(std::span<const double> totals) {
  if (totals.size() < 2) throw DataError("group_advantages: need at least two samples");
  const double n = static_cast<double>(totals.size());
  double mean = 0.0;
  for (double r : totals) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : totals) var += (r - mean) * (r - mean);
  var /= n;
  const double sd = std::max(std::sqrt(var), kAdvantageStdFloor);
  std::vector<double> adv(totals.size());
  for (std::size_t i = 0; i < totals.size(); ++i) {
    adv[i] = var > 0.0 ? (totals[i] - mean) / sd : 0.0;
  }
  return adv;
}

Mat transition_mean(const PromptField& field, const Vec& params, const Transition& tr) {
  const Mat v = field.velocity(params, tr.x_in, tr.t_from);
  return sde_mean(tr.x_in, v, tr.t_from, tr.t_to, tr.sigma);
}

double transition_logprob(const PromptField& field, const Vec& params, const Transition& tr) {
  return gaussian_logprob(tr.x_out, transition_mean(field, params, tr), tr.std);
}

double policy_ratio(const PromptField& field, const Trajectory& traj, const Vec& theta, const Vec& theta_old) {
  if (traj.transitions.empty()) throw DataError("policy_ratio: trajectory has no stochastic step");
  return std::exp(transition_log_ratio(field, traj, theta, theta_old));
}

double kl_penalty(const PromptField& field, const Trajectory& traj, const Vec& theta, const Vec& theta_ref) {
  double kl = 0.0;
  for (const Transition& tr : traj.transitions) {
    const Mat gap = transition_mean(field, theta, tr) - transition_mean(field, theta_ref, tr);
    kl += gap.squaredNorm() / (2.0 * tr.std * tr.std);
  }
  return kl;
}

Vec grpo_gradient(std::span<const RolloutGroup> groups, const Vec& params, const Vec& old_params,
                  const Vec& ref_params, const RLConfig& cfg, GrpoMetrics& metrics) {
  metrics = GrpoMetrics{};
  int n = 0;
  for (const RolloutGroup& g : groups) {
    if (g.trajectories.size() != g.advantages.size() || g.trajectories.size() != g.rewards.size()) {
      throw DataError("grpo: group '" + g.prompt_id + "' has mismatched rollout, reward and advantage counts");
    }
    for (const Trajectory& traj : g.trajectories) {
      if (traj.transitions.empty()) throw DataError("grpo: rollout without a stochastic step");
    }
    n += static_cast<int>(g.trajectories.size());
  }
  Vec grad = Vec::Zero(params.size());
  if (n == 0) return grad;

  double sq_adv = 0.0;
  int clipped = 0;
  metrics.ratio_min = std::numeric_limits<double>::infinity();
  metrics.ratio_max = -std::numeric_limits<double>::infinity();
  for (const RolloutGroup& g : groups) {
    for (std::size_t i = 0; i < g.trajectories.size(); ++i) {
      const Trajectory& traj = g.trajectories[i];
      const double adv = g.advantages[i];
      std::vector<Mat> mu(traj.transitions.size());
      std::vector<Mat> mu_ref(traj.transitions.size());
      double log_ratio = 0.0;
      double kl = 0.0;
      for (std::size_t k = 0; k < traj.transitions.size(); ++k) {
        const Transition& tr = traj.transitions[k];
        mu[k] = transition_mean(g.field, params, tr);
        const Mat mu_old = transition_mean(g.field, old_params, tr);
        mu_ref[k] = transition_mean(g.field, ref_params, tr);
        log_ratio += gaussian_logprob(tr.x_out, mu[k], tr.std) - gaussian_logprob(tr.x_out, mu_old, tr.std);
        kl += (mu[k] - mu_ref[k]).squaredNorm() / (2.0 * tr.std * tr.std);
      }
      const double ratio = std::exp(log_ratio);
      const double unclipped = ratio * adv;
      const double bounded = cfg.clip ? std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv : unclipped;
      const bool active = unclipped <= bounded;
      const double surrogate = std::min(unclipped, bounded);
      if (!active) ++clipped;

      metrics.objective += surrogate - cfg.beta * kl;
      metrics.kl += kl;
      metrics.ratio_mean += ratio;
      metrics.ratio_min = std::min(metrics.ratio_min, ratio);
      metrics.ratio_max = std::max(metrics.ratio_max, ratio);
      metrics.reward_total += g.rewards[i].total;
      metrics.reward_aesthetic += g.rewards[i].aesthetic;
      metrics.reward_intelligibility += g.rewards[i].intelligibility;
      metrics.reward_speaker += g.rewards[i].speaker;
      metrics.advantage_mean += adv;
      metrics.advantage_abs_mean += std::abs(adv);
      sq_adv += adv * adv;

      const double surrogate_coef = active ? unclipped : 0.0;
      if (surrogate_coef == 0.0 && cfg.beta == 0.0) continue;
      for (std::size_t k = 0; k < traj.transitions.size(); ++k) {
        const Transition& tr = traj.transitions[k];
        const double inv_var = 1.0 / (tr.std * tr.std);
        // dJ/dmu for this transition, then chain through dmu/dv.
        const Mat dj_dmu = (surrogate_coef * inv_var) * (tr.x_out - mu[k]) - (cfg.beta * inv_var) * (mu[k] - mu_ref[k]);
        const double gain = sde_mean_velocity_gain(tr.t_from, tr.t_to, tr.sigma);
        const Mat grad_v = (-gain / static_cast<double>(n)) * dj_dmu;
        g.field.backward(params, tr.x_in, tr.t_from, grad_v, grad);
      }
    }
  }
  const double dn = static_cast<double>(n);
  metrics.samples = n;
  metrics.objective /= dn;
  metrics.kl /= dn;
  metrics.ratio_mean /= dn;
  metrics.reward_total /= dn;
  metrics.reward_aesthetic /= dn;
  metrics.reward_intelligibility /= dn;
  metrics.reward_speaker /= dn;
  metrics.advantage_mean /= dn;
  metrics.advantage_abs_mean /= dn;
  metrics.advantage_std = std::sqrt(std::max(0.0, sq_adv / dn - metrics.advantage_mean * metrics.advantage_mean));
  metrics.clip_fraction = static_cast<double>(clipped) / dn;
  return grad;
}

GrpoMetrics grpo_update(std::span<const RolloutGroup> groups, Vec& params, const Vec& old_params,
                        const Vec& ref_params, const RLConfig& cfg, const OptimizerConfig& opt,
                        OptimizerState& state, const Vec* extra_grad) {
  GrpoMetrics metrics;
  Vec grad = grpo_gradient(groups, params, old_params, ref_params, cfg, metrics);
  if (extra_grad != nullptr) grad += *extra_grad;
  if (!std::isfinite(metrics.objective) || !grad.allFinite()) {
    throw NumericError("grpo: non-finite surrogate; update skipped");
  }
  optimizer_step_with_lr(opt, state, params, grad, cfg.lr);
  return metrics;
}

void rl_train_loop(std::span<const RLPrompt> prompts, Vec& params, const Vec& ref_params, const RLConfig& cfg,
                   const SamplerConfig& sampler, const OptimizerConfig& opt, OptimizerState& state,
                   const RewardFn& reward, std::uint64_t seed, int start_iteration, const RLLoopHooks& hooks) {
  cfg.validate();
  sampler.validate();
  if (cfg.iterations > start_iteration && prompts.empty()) throw DataError("rl: no prompts available");
  for (int it = start_iteration; it < cfg.iterations; ++it) {
    Rng it_rng(derive_seed(seed, kIterationStream, static_cast<std::uint64_t>(it)));
    const Vec old_params = params;
    std::vector<RolloutGroup> groups;
    RLIteration record;
    record.iteration = it;
    for (int p = 0; p < cfg.prompts_per_step; ++p) {
      const auto idx = static_cast<std::size_t>(it_rng.uniform_int(0, static_cast<std::int64_t>(prompts.size()) - 1));
      const RLPrompt& prompt = prompts[idx];
      RolloutGroup group;
      group.prompt_id = prompt.id;
      group.field = prompt.field;
      group.stoch_step = static_cast<int>(it_rng.uniform_int(sampler.sde_step_min, sampler.sde_step_max));
      group.noise_seed = derive_seed(seed, kNoiseStream, static_cast<std::uint64_t>(it) * 1000003ULL + p);
      const VelocityFn v_old = prompt.field.at(old_params);
      std::vector<Mat> finals;
      for (int m = 0; m < cfg.group_size; ++m) {
        Rng step_rng(derive_seed(group.noise_seed, static_cast<std::uint64_t>(m) + 1));
        group.trajectories.push_back(
            sample_trajectory(v_old, prompt.rows, prompt.cols, sampler, group.stoch_step, group.noise_seed, step_rng));
        finals.push_back(group.trajectories.back().final_state());
      }
      auto rewards = reward(prompt, finals);
      if (!rewards) {
        ++record.prompts_skipped;
        if (hooks.warn) hooks.warn("iteration " + std::to_string(it) + ": reward unavailable, skipping prompt " + prompt.id);
        continue;
      }
      if (rewards->size() != finals.size()) throw DataError("rl: reward count does not match group size");
      group.rewards = std::move(*rewards);
      std::vector<double> totals;
      for (const RewardVector& r : group.rewards) totals.push_back(r.total);
      group.advantages = group_advantages(totals);
      groups.push_back(std::move(group));
      ++record.prompts_used;
    }
    if (!groups.empty()) {
      std::optional<Vec> extra;
      if (hooks.extra_grad) extra = hooks.extra_grad(it, params);
      record.metrics = grpo_update(groups, params, old_params, ref_params, cfg, opt, state, extra ? &*extra : nullptr);
    }
    if (hooks.on_iteration) hooks.on_iteration(record, params, state);
  }
}

}  // namespace singflow
