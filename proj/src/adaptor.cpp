// SPDX-License-Identifier: Apache-2.0
#include "singflow/adaptor.hpp"

#include "singflow/rng.hpp"

#include <cmath>

namespace singflow {

TimbreAdaptor::TimbreAdaptor(AdaptorConfig cfg) : cfg_(cfg) {
  if (cfg_.timbre_dim < 0 || cfg_.f0_dim < 0) throw ConfigError("adaptor: negative dimension");
  if (!(cfg_.alpha_tau >= 0.0)) throw ConfigError("adaptor: alpha_tau must be >= 0");
  const int in = cfg_.f0_dim + cfg_.timbre_dim;
  const int hidden = cfg_.hidden_width();
  w1_ = layout_.add("adaptor.w1", hidden, in);
  b1_ = layout_.add("adaptor.b1", hidden, 1);
  w2_ = layout_.add("adaptor.w2", cfg_.timbre_dim, hidden);
  b2_ = layout_.add("adaptor.b2", cfg_.timbre_dim, 1);
}

Vec TimbreAdaptor::init_params(std::uint64_t seed) const {
  Vec phi = Vec::Zero(num_params());
  Rng rng(seed);
  auto w1 = layout_.view(phi, w1_);
  const double scale = w1.cols() > 0 ? 1.0 / std::sqrt(static_cast<double>(w1.cols())) : 0.0;
  for (Eigen::Index j = 0; j < w1.cols(); ++j) {
    for (Eigen::Index i = 0; i < w1.rows(); ++i) w1(i, j) = scale * rng.normal();
  }
  return phi;
}

Mat TimbreAdaptor::residual(const Vec& phi, const Vec& e_global, const Mat& h_f0, Cache* cache) const {
  if (e_global.size() != cfg_.timbre_dim || h_f0.cols() != cfg_.f0_dim) {
    throw DataError("adapt_timbre: dimension mismatch");
  }
  const Eigen::Index frames = h_f0.rows();
  Mat input(frames, cfg_.f0_dim + cfg_.timbre_dim);
  input.leftCols(cfg_.f0_dim) = h_f0;
  input.rightCols(cfg_.timbre_dim) = e_global.transpose().replicate(frames, 1);
  const auto w1 = layout_.view(phi, w1_);
  const auto b1 = layout_.view(phi, b1_);
  const auto w2 = layout_.view(phi, w2_);
  const auto b2 = layout_.view(phi, b2_);
  Mat hidden = input * w1.transpose();
  hidden.rowwise() += b1.col(0).transpose();
  Mat act = silu(hidden);
  Mat out = act * w2.transpose();
  out.rowwise() += b2.col(0).transpose();
  if (cache != nullptr) {
    cache->input = std::move(input);
    cache->hidden = std::move(hidden);
    cache->act = std::move(act);
  }
  return out;
}

Mat TimbreAdaptor::forward(const Vec& phi, const Vec& e_global, const Mat& h_f0, Cache* cache) const {
  const Mat delta = residual(phi, e_global, h_f0, cache);
  Mat out = e_global.transpose().replicate(h_f0.rows(), 1);
  if (cfg_.alpha_tau != 0.0) out += cfg_.alpha_tau * delta;
  return out;
}

void TimbreAdaptor::backward(const Vec& phi, const Cache& cache, const Mat& grad_out, Vec& grad_phi) const {
  const Mat g_delta = cfg_.alpha_tau * grad_out;
  const auto w2 = layout_.view(phi, w2_);
  layout_.view(grad_phi, w2_) += g_delta.transpose() * cache.act;
  layout_.view(grad_phi, b2_).col(0) += g_delta.colwise().sum().transpose();
  const Mat g_hidden = (g_delta * w2).cwiseProduct(silu_grad(cache.hidden));
  layout_.view(grad_phi, w1_) += g_hidden.transpose() * cache.input;
  layout_.view(grad_phi, b1_).col(0) += g_hidden.colwise().sum().transpose();
}

Mat adapt_timbre(const TimbreEmbedding& e_global, const F0Embedding& h_f0, const TimbreAdaptor& adaptor,
                 const Vec& phi) {
  return adaptor.forward(phi, e_global.vector, h_f0.frames);
}

}  // namespace singflow
