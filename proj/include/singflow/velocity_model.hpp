// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "singflow/core.hpp"
#include "singflow/params.hpp"

#include <vector>

namespace singflow {

struct ModelConfig {
  int mel_channels = 16;
  int cond_dim = 0;
  int hidden = 64;
  int blocks = 2;
  int time_freqs = 8;

  int input_dim() const { return mel_channels + cond_dim; }
  bool operator==(const ModelConfig&) const = default;
};

/// Compact residual sequence model standing in for the DiT velocity field.
///
///   a_i   = W0 u_i + Wm u_{i-1} + Wp u_{i+1} + Wt tau(t) + b0,  u = [x | z]
///   h_0   = silu(a)
///   h_l+1 = h_l + W2_l silu(W1_l h_l + Wt_l tau(t) + b1_l) + b2_l
///   v     = Wo h_L + bo
///
/// tau(t) is a sinusoidal embedding with frequencies 2^k. The kernel-3
/// temporal convolution zero-pads at the sequence edges.
class VelocityModel {
 public:
  struct Cache {
    Mat input;                // T x (C + D)
    Vec temb;                 // 2K
    Mat pre0;                 // T x H
    std::vector<Mat> states;  // h_0 .. h_L
    std::vector<Mat> block_pre;
    std::vector<Mat> block_act;
  };

  explicit VelocityModel(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  const ParamLayout& layout() const { return layout_; }
  Eigen::Index num_params() const { return layout_.size(); }
  Vec init_params(std::uint64_t seed) const;

  Vec time_embedding(double t) const;

  Mat forward(const Vec& theta, const Mat& x, const Mat& cond, double t, Cache* cache = nullptr) const;
  /// Accumulates dL/dtheta; returns dL/dcond (T x D).
  Mat backward(const Vec& theta, const Cache& cache, const Mat& grad_out, Vec& grad_theta) const;

 private:
  struct Block {
    int w1, b1, wt, w2, b2;
  };
  ModelConfig cfg_;
  ParamLayout layout_;
  int w0_, wm_, wp_, wt0_, b0_, wo_, bo_;
  std::vector<Block> blocks_;
};

}  // namespace singflow
