// SPDX-License-Identifier: Apache-2.0
#include "singflow/eb_loss.hpp"

#include <algorithm>
#include <cmath>

namespace singflow {

void EBWeightConfig::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("eb: lambda must be >= 0");
  if (!(ramp_start >= 0.0 && ramp_start <= 1.0)) throw ConfigError("eb: ramp_start must lie in [0, 1]");
  if (channel_scales.size() < 1) throw ConfigError("eb: channel scales not estimated");
  if ((channel_scales.array() <= 0.0).any() || !channel_scales.allFinite()) {
    throw ConfigError("eb: channel scales must be positive and finite");
  }
}

void ChannelScaleEstimator::add(const Mat& u) {
  if (u.rows() < 1) return;
  if (mean_.size() == 0) {
    mean_ = Vec::Zero(u.cols());
    m2_ = Vec::Zero(u.cols());
  } else if (u.cols() != mean_.size()) {
    throw DataError("estimate_channel_scales: channel count changed within the stream");
  }
  // Chan et al. pairwise merge of (count, mean, M2).
  const double n_b = static_cast<double>(u.rows());
  const Vec mean_b = u.colwise().mean().transpose();
  const Vec m2_b = (u.rowwise() - mean_b.transpose()).array().square().colwise().sum().transpose();
  const double n = count_ + n_b;
  const Vec delta = mean_b - mean_;
  mean_ += delta * (n_b / n);
  m2_ += m2_b + delta.cwiseProduct(delta) * (count_ * n_b / n);
  count_ = n;
  ++samples_;
}

Vec ChannelScaleEstimator::finish(ScaleMode mode) const {
  if (samples_ == 0) throw DataError("estimate_channel_scales: empty stream");
  Vec var = m2_ / count_;
  Vec scale = mode == ScaleMode::kStd ? Vec(var.cwiseSqrt()) : var;
  return scale.cwiseMax(kChannelScaleFloor);
}

Vec estimate_channel_scales(const std::vector<Mat>& targets, ScaleMode mode) {
  ChannelScaleEstimator est;
  for (const Mat& u : targets) est.add(u);
  return est.finish(mode);
}

double freq_ramp(int c, int channels, double start) {
  if (channels <= 1) return 0.0;
  const double top = static_cast<double>(channels - 1);
  const double anchor = start * top;
  if (c <= anchor) return c == channels - 1 ? 1.0 : 0.0;
  return std::min(1.0, (static_cast<double>(c) - anchor) / (top - anchor));
}

double time_factor(double t) { return 3.0 * (1.0 - t) * (1.0 - t); }

Vec eb_weights_raw(double t, const EBWeightConfig& cfg) {
  const auto channels = static_cast<int>(cfg.channel_scales.size());
  const double s = time_factor(t);
  Vec w(channels);
  for (int c = 0; c < channels; ++c) {
    w(c) = (1.0 / cfg.channel_scales(c)) * (1.0 + cfg.lambda * s * freq_ramp(c, channels, cfg.ramp_start));
  }
  return w;
}

Vec eb_weights(double t, const EBWeightConfig& cfg) {
  Vec w = eb_weights_raw(t, cfg);
  if (cfg.normalize_mean_one) w /= w.mean();
  return w;
}

FlowLoss eb_flow_loss(const Mat& pred, const Mat& target, const MaskPlan& mask, double t,
                      const EBWeightConfig& cfg, Mat* grad_pred) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw DataError("eb_flow_loss: prediction and target shapes differ");
  }
  if (mask.frames != pred.rows() || mask.boundary < 0 || mask.boundary > mask.frames) {
    throw DataError("eb_flow_loss: mask does not match frame count");
  }
  if (cfg.channel_scales.size() != pred.cols()) {
    throw DataError("eb_flow_loss: channel scales do not match channel count");
  }
  if (grad_pred != nullptr) *grad_pred = Mat::Zero(pred.rows(), pred.cols());
  const Eigen::Index predicted = mask.predicted_count();
  if (predicted == 0) return FlowLoss{0.0, true};

  const Vec w = eb_weights(t, cfg);
  const Mat diff = pred.bottomRows(predicted) - target.bottomRows(predicted);
  const double value = (diff.array().square().rowwise() * w.transpose().array()).sum() /
                       static_cast<double>(predicted);
  if (grad_pred != nullptr) {
    grad_pred->bottomRows(predicted) =
        ((diff.array().rowwise() * w.transpose().array()) * (2.0 / static_cast<double>(predicted))).matrix();
  }
  return FlowLoss{value, false};
}

}  // namespace singflow
