// SPDX-License-Identifier: Apache-2.0
#include "singflow/velocity_model.hpp"

#include "singflow/rng.hpp"

#include <cmath>

namespace singflow {

namespace {

// Row i of the result is row i-1 of m (zero for the first row).
Mat shift_down(const Mat& m) {
  Mat out = Mat::Zero(m.rows(), m.cols());
  if (m.rows() > 1) out.bottomRows(m.rows() - 1) = m.topRows(m.rows() - 1);
  return out;
}

// Row i of the result is row i+1 of m (zero for the last row).
Mat shift_up(const Mat& m) {
  Mat out = Mat::Zero(m.rows(), m.cols());
  if (m.rows() > 1) out.topRows(m.rows() - 1) = m.bottomRows(m.rows() - 1);
  return out;
}

void fill_gaussian(Eigen::Map<Mat> w, double scale, Rng& rng) {
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = scale * rng.normal();
  }
}

}  // namespace

VelocityModel::VelocityModel(ModelConfig cfg) : cfg_(cfg) {
  if (cfg_.mel_channels < 1 || cfg_.cond_dim < 0 || cfg_.hidden < 1 || cfg_.blocks < 0 ||
      cfg_.time_freqs < 1) {
    throw ConfigError("model: invalid dimensions");
  }
  const int in = cfg_.input_dim();
  const int h = cfg_.hidden;
  const int te = 2 * cfg_.time_freqs;
  w0_ = layout_.add("model.in.w0", h, in);
  wm_ = layout_.add("model.in.wm", h, in);
  wp_ = layout_.add("model.in.wp", h, in);
  wt0_ = layout_.add("model.in.wt", h, te);
  b0_ = layout_.add("model.in.b", h, 1);
  for (int l = 0; l < cfg_.blocks; ++l) {
    const std::string p = "model.block" + std::to_string(l) + ".";
    Block b{};
    b.w1 = layout_.add(p + "w1", h, h);
    b.b1 = layout_.add(p + "b1", h, 1);
    b.wt = layout_.add(p + "wt", h, te);
    b.w2 = layout_.add(p + "w2", h, h);
    b.b2 = layout_.add(p + "b2", h, 1);
    blocks_.push_back(b);
  }
  wo_ = layout_.add("model.out.w", cfg_.mel_channels, h);
  bo_ = layout_.add("model.out.b", cfg_.mel_channels, 1);
}

Vec VelocityModel::init_params(std::uint64_t seed) const {
  Vec theta = Vec::Zero(num_params());
  Rng rng(seed);
  const double in_scale = 1.0 / std::sqrt(3.0 * cfg_.input_dim());
  const double te_scale = 1.0 / std::sqrt(2.0 * cfg_.time_freqs);
  const double h_scale = 1.0 / std::sqrt(static_cast<double>(cfg_.hidden));
  fill_gaussian(layout_.view(theta, w0_), in_scale, rng);
  fill_gaussian(layout_.view(theta, wm_), in_scale, rng);
  fill_gaussian(layout_.view(theta, wp_), in_scale, rng);
  fill_gaussian(layout_.view(theta, wt0_), te_scale, rng);
  for (const Block& b : blocks_) {
    fill_gaussian(layout_.view(theta, b.w1), h_scale, rng);
    fill_gaussian(layout_.view(theta, b.wt), te_scale, rng);
    fill_gaussian(layout_.view(theta, b.w2), 0.5 * h_scale, rng);
  }
  fill_gaussian(layout_.view(theta, wo_), h_scale, rng);
  return theta;
}

Vec VelocityModel::time_embedding(double t) const {
  Vec e(2 * cfg_.time_freqs);
  for (int k = 0; k < cfg_.time_freqs; ++k) {
    const double w = std::ldexp(1.0, k);
    e(k) = std::sin(w * t);
    e(cfg_.time_freqs + k) = std::cos(w * t);
  }
  return e;
}

Mat VelocityModel::forward(const Vec& theta, const Mat& x, const Mat& cond, double t, Cache* cache) const {
  if (x.cols() != cfg_.mel_channels || cond.cols() != cfg_.cond_dim || cond.rows() != x.rows()) {
    throw DataError("velocity model: input shape mismatch");
  }
  if (theta.size() != num_params()) throw DataError("velocity model: parameter size mismatch");
  const Eigen::Index frames = x.rows();
  Mat input(frames, cfg_.input_dim());
  input.leftCols(cfg_.mel_channels) = x;
  input.rightCols(cfg_.cond_dim) = cond;
  const Vec temb = time_embedding(t);

  Mat pre = input * layout_.view(theta, w0_).transpose() +
            shift_down(input) * layout_.view(theta, wm_).transpose() +
            shift_up(input) * layout_.view(theta, wp_).transpose();
  const Vec bias0 = layout_.view(theta, wt0_) * temb + layout_.view(theta, b0_).col(0);
  pre.rowwise() += bias0.transpose();
  Mat h = silu(pre);

  if (cache != nullptr) {
    cache->states.clear();
    cache->block_pre.clear();
    cache->block_act.clear();
    cache->states.push_back(h);
  }
  for (const Block& b : blocks_) {
    Mat bp = h * layout_.view(theta, b.w1).transpose();
    const Vec bias = layout_.view(theta, b.wt) * temb + layout_.view(theta, b.b1).col(0);
    bp.rowwise() += bias.transpose();
    Mat ba = silu(bp);
    Mat next = h + ba * layout_.view(theta, b.w2).transpose();
    next.rowwise() += layout_.view(theta, b.b2).col(0).transpose();
    if (cache != nullptr) {
      cache->block_pre.push_back(std::move(bp));
      cache->block_act.push_back(std::move(ba));
      cache->states.push_back(next);
    }
    h = std::move(next);
  }
  Mat out = h * layout_.view(theta, wo_).transpose();
  out.rowwise() += layout_.view(theta, bo_).col(0).transpose();

  if (cache != nullptr) {
    cache->input = std::move(input);
    cache->temb = temb;
    cache->pre0 = std::move(pre);
  }
  return out;
}

Mat VelocityModel::backward(const Vec& theta, const Cache& cache, const Mat& grad_out, Vec& grad_theta) const {
  const Mat& h_last = cache.states.back();
  layout_.view(grad_theta, wo_) += grad_out.transpose() * h_last;
  layout_.view(grad_theta, bo_).col(0) += grad_out.colwise().sum().transpose();
  Mat g_h = grad_out * layout_.view(theta, wo_);

  for (int l = cfg_.blocks - 1; l >= 0; --l) {
    const Block& b = blocks_[static_cast<std::size_t>(l)];
    const auto li = static_cast<std::size_t>(l);
    layout_.view(grad_theta, b.w2) += g_h.transpose() * cache.block_act[li];
    layout_.view(grad_theta, b.b2).col(0) += g_h.colwise().sum().transpose();
    const Mat g_pre = (g_h * layout_.view(theta, b.w2)).cwiseProduct(silu_grad(cache.block_pre[li]));
    layout_.view(grad_theta, b.w1) += g_pre.transpose() * cache.states[li];
    const Vec g_bias = g_pre.colwise().sum().transpose();
    layout_.view(grad_theta, b.b1).col(0) += g_bias;
    layout_.view(grad_theta, b.wt) += g_bias * cache.temb.transpose();
    g_h += g_pre * layout_.view(theta, b.w1);
  }

  const Mat g_pre0 = g_h.cwiseProduct(silu_grad(cache.pre0));
  layout_.view(grad_theta, w0_) += g_pre0.transpose() * cache.input;
  layout_.view(grad_theta, wm_) += g_pre0.transpose() * shift_down(cache.input);
  layout_.view(grad_theta, wp_) += g_pre0.transpose() * shift_up(cache.input);
  const Vec g_bias0 = g_pre0.colwise().sum().transpose();
  layout_.view(grad_theta, b0_).col(0) += g_bias0;
  layout_.view(grad_theta, wt0_) += g_bias0 * cache.temb.transpose();

  const Mat g_input = g_pre0 * layout_.view(theta, w0_) +
                      shift_up(g_pre0 * layout_.view(theta, wm_)) +
                      shift_down(g_pre0 * layout_.view(theta, wp_));
  return g_input.rightCols(cfg_.cond_dim);
}

}  // namespace singflow
