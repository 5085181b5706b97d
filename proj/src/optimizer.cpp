// SPDX-License-Identifier: Apache-2.0
#include "singflow/optimizer.hpp"

#include <algorithm>
#include <cmath>

namespace singflow {

double learning_rate(const OptimizerConfig& cfg, std::int64_t step) {
  if (cfg.decay_steps <= 0 || cfg.lr_peak <= 0.0 || cfg.lr_floor <= 0.0) return cfg.lr_peak;
  const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(cfg.decay_steps));
  return cfg.lr_peak * std::pow(cfg.lr_floor / cfg.lr_peak, frac);
}

void OptimizerState::reset(Eigen::Index n) {
  first = Vec::Zero(n);
  second = Vec::Zero(n);
  step = 0;
}

void optimizer_step_with_lr(const OptimizerConfig& cfg, OptimizerState& state, Vec& params,
                            const Vec& grad, double lr) {
  if (state.first.size() != params.size()) state.reset(params.size());
  if (grad.size() != params.size()) throw DataError("optimizer: gradient size mismatch");
  ++state.step;
  if (cfg.kind == OptimizerKind::kAdamW) {
    state.first = cfg.beta1 * state.first + (1.0 - cfg.beta1) * grad;
    state.second = cfg.beta2 * state.second + (1.0 - cfg.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    const Vec update = (state.first / c1).array() / ((state.second / c2).cwiseSqrt().array() + cfg.eps);
    params -= lr * (update + cfg.weight_decay * params);
  } else {
    state.second = cfg.beta2 * state.second + (1.0 - cfg.beta2) * grad.cwiseAbs2();
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    const Vec update = grad.array() / ((state.second / c2).cwiseSqrt().array() + cfg.eps);
    params -= lr * (update + cfg.weight_decay * params);
  }
}

double optimizer_step(const OptimizerConfig& cfg, OptimizerState& state, Vec& params, const Vec& grad) {
  const double lr = learning_rate(cfg, state.step);
  optimizer_step_with_lr(cfg, state, params, grad, lr);
  return lr;
}

OptimizerKind parse_optimizer_kind(const std::string& s) {
  if (s == "adamw") return OptimizerKind::kAdamW;
  if (s == "rmsprop") return OptimizerKind::kRmsProp;
  throw ConfigError("unknown optimizer kind: " + s);
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::kAdamW ? "adamw" : "rmsprop"; }

}  // namespace singflow
