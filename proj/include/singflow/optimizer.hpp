// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "singflow/core.hpp"

#include <cstdint>
#include <string>

namespace singflow {

enum class OptimizerKind { kAdamW, kRmsProp };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdamW;
  double lr_peak = 1e-4;
  double lr_floor = 1e-5;
  std::int64_t decay_steps = 60000;  // steps to reach the floor
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Exponential decay from lr_peak to lr_floor over decay_steps, then flat.
double learning_rate(const OptimizerConfig& cfg, std::int64_t step);

struct OptimizerState {
  Vec first;   // AdamW first moment (unused by RMSProp)
  Vec second;  // squared-gradient average
  std::int64_t step = 0;

  void reset(Eigen::Index n);
};

/// One update in place. Returns the learning rate that was applied.
double optimizer_step(const OptimizerConfig& cfg, OptimizerState& state, Vec& params, const Vec& grad);
/// Same update with an explicit learning rate (RL uses a fixed rate).
void optimizer_step_with_lr(const OptimizerConfig& cfg, OptimizerState& state, Vec& params,
                            const Vec& grad, double lr);

OptimizerKind parse_optimizer_kind(const std::string& s);
std::string to_string(OptimizerKind k);

}  // namespace singflow
