// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "singflow/core.hpp"
#include "singflow/encoders.hpp"
#include "singflow/params.hpp"

namespace singflow {

struct AdaptorConfig {
  int timbre_dim = 0;
  int f0_dim = 0;
  int hidden = 0;  // 0 selects 2 * timbre_dim
  double alpha_tau = 0.5;

  int hidden_width() const { return hidden > 0 ? hidden : 2 * timbre_dim; }
};

/// F0-aware timbre adaptor: h_tau(t) = e + alpha * MLP([h_f(t); e]).
/// One SiLU hidden layer; the output layer starts at zero so a fresh adaptor
/// reproduces the static embedding.
class TimbreAdaptor {
 public:
  struct Cache {
    Mat input;   // T x (f0_dim + timbre_dim)
    Mat hidden;  // pre-activation
    Mat act;
  };

  explicit TimbreAdaptor(AdaptorConfig cfg);

  const AdaptorConfig& config() const { return cfg_; }
  const ParamLayout& layout() const { return layout_; }
  Eigen::Index num_params() const { return layout_.size(); }
  Vec init_params(std::uint64_t seed) const;

  /// Residual Delta e_tau(t) only (before alpha scaling).
  Mat residual(const Vec& phi, const Vec& e_global, const Mat& h_f0, Cache* cache = nullptr) const;
  Mat forward(const Vec& phi, const Vec& e_global, const Mat& h_f0, Cache* cache = nullptr) const;
  /// Accumulates dL/dphi for upstream gradient dL/dh_tau.
  void backward(const Vec& phi, const Cache& cache, const Mat& grad_out, Vec& grad_phi) const;

 private:
  AdaptorConfig cfg_;
  ParamLayout layout_;
  int w1_, b1_, w2_, b2_;
};

Mat adapt_timbre(const TimbreEmbedding& e_global, const F0Embedding& h_f0, const TimbreAdaptor& adaptor,
                 const Vec& phi);

}  // namespace singflow
