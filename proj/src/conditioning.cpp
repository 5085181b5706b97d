// SPDX-License-Identifier: Apache-2.0
#include "singflow/conditioning.hpp"

#include <algorithm>
#include <cmath>

namespace singflow {

MaskPlan make_mask(Eigen::Index frames, double t_m) {
  if (frames < 1) throw DataError("mask: frame count must be >= 1");
  if (!(t_m >= 0.0 && t_m <= 1.0)) throw DataError("mask: t_m must lie in [0, 1]");
  MaskPlan plan;
  plan.t_m = t_m;
  plan.frames = frames;
  plan.boundary = std::clamp<Eigen::Index>(
      static_cast<Eigen::Index>(std::floor(t_m * static_cast<double>(frames))), 0, frames);
  return plan;
}

MaskPlan sample_mask(Eigen::Index frames, Rng& rng) { return make_mask(frames, rng.uniform()); }

Mat assemble_content(const Mat& orig, const Mat& shift, const MaskPlan& mask) {
  if (orig.rows() != mask.frames || shift.rows() != mask.frames || orig.cols() != shift.cols()) {
    throw DataError("assemble_content: features must share T and width after interpolation");
  }
  Mat out(mask.frames, orig.cols());
  out.topRows(mask.boundary) = orig.topRows(mask.boundary);
  out.bottomRows(mask.frames - mask.boundary) = shift.bottomRows(mask.frames - mask.boundary);
  return out;
}

Mat ConditioningBundle::concatenated() const {
  Mat z(frames(), width());
  z << h_tau, h_content, h_f0;
  return z;
}

ConditioningBundle assemble_condition(const Mat& h_tau, const Mat& h_content, const Mat& h_f0,
                                      const MaskPlan& mask) {
  if (h_tau.rows() != h_content.rows() || h_tau.rows() != h_f0.rows()) {
    throw DataError("assemble_condition: frame counts differ across streams");
  }
  if (!h_tau.allFinite() || !h_content.allFinite() || !h_f0.allFinite()) {
    throw NumericError("assemble_condition: non-finite conditioning features");
  }
  return ConditioningBundle{h_tau, h_content, h_f0, mask};
}

ConditioningBundle assemble_condition(const Mat& h_tau, const Mat& h_content, const Mat& h_f0) {
  return assemble_condition(h_tau, h_content, h_f0, make_mask(std::max<Eigen::Index>(1, h_tau.rows()), 0.0));
}

Mat flow_path(const Mat& m, const Mat& epsilon, double t) { return (1.0 - t) * m + t * epsilon; }

FlowState masked_mel(const Mat& m, const MaskPlan& mask, double t, const Mat& epsilon) {
  return masked_mel(m, m, mask, t, epsilon);
}

FlowState masked_mel(const Mat& observed, const Mat& target, const MaskPlan& mask, double t,
                     const Mat& epsilon) {
  if (target.rows() != mask.frames || observed.rows() != target.rows() ||
      observed.cols() != target.cols() || epsilon.rows() != target.rows() ||
      epsilon.cols() != target.cols()) {
    throw DataError("masked_mel: shape mismatch");
  }
  FlowState s;
  s.t = t;
  s.epsilon = epsilon;
  s.x_t.resize(target.rows(), target.cols());
  const Eigen::Index predicted = mask.frames - mask.boundary;
  s.x_t.topRows(mask.boundary) = observed.topRows(mask.boundary);
  s.x_t.bottomRows(predicted) =
      (1.0 - t) * target.bottomRows(predicted) + t * epsilon.bottomRows(predicted);
  return s;
}

Mat velocity_target(const Mat& m, const Mat& epsilon) {
  if (m.rows() != epsilon.rows() || m.cols() != epsilon.cols()) {
    throw DataError("velocity_target: shape mismatch");
  }
  return epsilon - m;
}

Mat standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  }
  return m;
}

}  // namespace singflow
