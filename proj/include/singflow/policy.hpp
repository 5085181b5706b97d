// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "singflow/adaptor.hpp"
#include "singflow/velocity_model.hpp"

namespace singflow {

/// Per-sequence conditioning ingredients. The adaptor turns (e_global, h_f0)
/// into h_tau, so different parameter snapshots see their own timbre map.
struct CondInputs {
  Vec e_global;  // d
  Mat h_f0;      // T x D_f
  Mat content;   // T x D_c, already mask-assembled

  Eigen::Index frames() const { return h_f0.rows(); }
};

/// Velocity field v_theta(x, z_cond(t), t) with z_cond = [h_tau | content | h_f0].
/// Parameters are one flat vector: model weights followed by adaptor weights.
class Policy {
 public:
  struct Cache {
    TimbreAdaptor::Cache adaptor;
    VelocityModel::Cache model;
  };

  Policy(const ModelConfig& model, const AdaptorConfig& adaptor, int content_dim);

  const VelocityModel& model() const { return model_; }
  const TimbreAdaptor& adaptor() const { return adaptor_; }
  int content_dim() const { return content_dim_; }
  Eigen::Index num_params() const { return model_.num_params() + adaptor_.num_params(); }
  Eigen::Index adaptor_offset() const { return model_.num_params(); }

  Vec init_params(std::uint64_t seed) const;

  Mat condition(const Vec& params, const CondInputs& in, TimbreAdaptor::Cache* cache = nullptr) const;
  Mat velocity(const Vec& params, const CondInputs& in, const Mat& x, double t, Cache* cache = nullptr) const;
  /// Accumulates dL/dparams for upstream dL/dv.
  void backward(const Vec& params, const Cache& cache, const Mat& grad_v, Vec& grad) const;

 private:
  VelocityModel model_;
  TimbreAdaptor adaptor_;
  int content_dim_;
};

ModelConfig policy_model_config(ModelConfig base, const AdaptorConfig& adaptor, int content_dim);

}  // namespace singflow
