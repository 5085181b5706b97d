// SPDX-License-Identifier: Apache-2.0
#include "singflow/policy.hpp"

#include "singflow/rng.hpp"

namespace singflow {

ModelConfig policy_model_config(ModelConfig base, const AdaptorConfig& adaptor, int content_dim) {
  base.cond_dim = adaptor.timbre_dim + content_dim + adaptor.f0_dim;
  return base;
}

Policy::Policy(const ModelConfig& model, const AdaptorConfig& adaptor, int content_dim)
    : model_(policy_model_config(model, adaptor, content_dim)), adaptor_(adaptor), content_dim_(content_dim) {}

Vec Policy::init_params(std::uint64_t seed) const {
  Vec params(num_params());
  params.head(model_.num_params()) = model_.init_params(derive_seed(seed, 1));
  params.tail(adaptor_.num_params()) = adaptor_.init_params(derive_seed(seed, 2));
  return params;
}

Mat Policy::condition(const Vec& params, const CondInputs& in, TimbreAdaptor::Cache* cache) const {
  const auto& acfg = adaptor_.config();
  if (in.content.cols() != content_dim_ || in.content.rows() != in.h_f0.rows()) {
    throw DataError("policy: content features do not match the conditioning layout");
  }
  const Vec phi = params.tail(adaptor_.num_params());
  const Mat h_tau = adaptor_.forward(phi, in.e_global, in.h_f0, cache);
  Mat z(in.frames(), acfg.timbre_dim + content_dim_ + acfg.f0_dim);
  z << h_tau, in.content, in.h_f0;
  return z;
}

Mat Policy::velocity(const Vec& params, const CondInputs& in, const Mat& x, double t, Cache* cache) const {
  if (params.size() != num_params()) throw DataError("policy: parameter size mismatch");
  const Mat z = condition(params, in, cache != nullptr ? &cache->adaptor : nullptr);
  const Vec theta = params.head(model_.num_params());
  return model_.forward(theta, x, z, t, cache != nullptr ? &cache->model : nullptr);
}

void Policy::backward(const Vec& params, const Cache& cache, const Mat& grad_v, Vec& grad) const {
  const Eigen::Index n_model = model_.num_params();
  const Vec theta = params.head(n_model);
  Vec g_theta = Vec::Zero(n_model);
  const Mat g_cond = model_.backward(theta, cache.model, grad_v, g_theta);
  grad.head(n_model) += g_theta;
  const int d = adaptor_.config().timbre_dim;
  if (adaptor_.num_params() > 0 && d > 0) {
    const Vec phi = params.tail(adaptor_.num_params());
    Vec g_phi = Vec::Zero(adaptor_.num_params());
    adaptor_.backward(phi, cache.adaptor, g_cond.leftCols(d), g_phi);
    grad.tail(adaptor_.num_params()) += g_phi;
  }
}

}  // namespace singflow
