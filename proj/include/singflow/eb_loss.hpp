// SPDX-License-Identifier: Apache-2.0
//
// Energy-balanced flow-matching loss:
//   w_c(t) = w0_c * (1 + lambda * s(t) * g(c)),  w0_c = 1 / sigma_c
// with s(t) = 3 (1 - t)^2 (unit mean for t ~ U[0,1]) and g a linear ramp over
// the top (1 - ramp_start) fraction of channels.
#pragma once

#include "singflow/conditioning.hpp"
#include "singflow/core.hpp"

#include <functional>
#include <optional>

namespace singflow {

enum class ScaleMode { kStd, kVariance };

struct EBWeightConfig {
  double lambda = 0.4;
  double ramp_start = 0.7;
  Vec channel_scales;  // sigma_c, floored
  bool normalize_mean_one = true;
  ScaleMode scale_mode = ScaleMode::kStd;

  void validate() const;
};

constexpr double kChannelScaleFloor = 1e-3;

/// Streaming per-channel population statistics of velocity targets.
class ChannelScaleEstimator {
 public:
  void add(const Mat& u);
  std::size_t samples() const { return samples_; }
  /// Floored per-channel std (or variance) over all frames seen.
  Vec finish(ScaleMode mode = ScaleMode::kStd) const;

 private:
  std::size_t samples_ = 0;
  double count_ = 0.0;
  Vec mean_;
  Vec m2_;
};

Vec estimate_channel_scales(const std::vector<Mat>& targets, ScaleMode mode = ScaleMode::kStd);

double freq_ramp(int c, int channels, double start);
double time_factor(double t);
Vec eb_weights(double t, const EBWeightConfig& cfg);
/// Formula weights before mean-one normalisation.
Vec eb_weights_raw(double t, const EBWeightConfig& cfg);

struct FlowLoss {
  double value = 0.0;
  bool all_observed = false;  // boundary == T: no predicted frames
};

/// Mean over predicted frames of sum_c w_c(t) (u_c - v_c)^2. When `grad_pred`
/// is given it receives dLoss/dpred (zero on observed frames).
FlowLoss eb_flow_loss(const Mat& pred, const Mat& target, const MaskPlan& mask, double t,
                      const EBWeightConfig& cfg, Mat* grad_pred = nullptr);

}  // namespace singflow
