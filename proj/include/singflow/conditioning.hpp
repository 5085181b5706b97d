// SPDX-License-Identifier: Apache-2.0
//
// Temporal assembly of the generator's conditions: the stochastic mask
// boundary, segment-wise content substitution, feature concatenation and the
// masked rectified-flow input.
#pragma once

#include "singflow/core.hpp"
#include "singflow/rng.hpp"

namespace singflow {

/// Frames [0, boundary) are observed (timbre region); [boundary, T) are
/// predicted (content region).
struct MaskPlan {
  double t_m = 0.0;
  Eigen::Index frames = 0;
  Eigen::Index boundary = 0;

  bool observed(Eigen::Index i) const { return i < boundary; }
  Eigen::Index predicted_count() const { return frames - boundary; }
};

/// boundary = floor(t_m * T).
MaskPlan make_mask(Eigen::Index frames, double t_m);
MaskPlan sample_mask(Eigen::Index frames, Rng& rng);

/// Rows before the boundary come from `orig`, the rest from `shift`.
Mat assemble_content(const Mat& orig, const Mat& shift, const MaskPlan& mask);

struct ConditioningBundle {
  Mat h_tau;
  Mat h_content;
  Mat h_f0;
  MaskPlan mask;

  Eigen::Index frames() const { return h_tau.rows(); }
  Eigen::Index width() const { return h_tau.cols() + h_content.cols() + h_f0.cols(); }
  /// [h_tau | h_content | h_f0] along the feature axis.
  Mat concatenated() const;
};

ConditioningBundle assemble_condition(const Mat& h_tau, const Mat& h_content, const Mat& h_f0,
                                      const MaskPlan& mask);
ConditioningBundle assemble_condition(const Mat& h_tau, const Mat& h_content, const Mat& h_f0);

struct FlowState {
  Mat x_t;
  double t = 0.0;
  Mat epsilon;
};

/// (1 - t) m + t eps.
Mat flow_path(const Mat& m, const Mat& epsilon, double t);

/// Observed frames carry `m`; predicted frames carry the flow path.
FlowState masked_mel(const Mat& m, const MaskPlan& mask, double t, const Mat& epsilon);
/// Variant whose observed frames come from a different (e.g. contaminated)
/// mel while the path runs toward `target`.
FlowState masked_mel(const Mat& observed, const Mat& target, const MaskPlan& mask, double t,
                     const Mat& epsilon);

/// u = eps - m, the constant velocity of the straight path.
Mat velocity_target(const Mat& m, const Mat& epsilon);

Mat standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng);

}  // namespace singflow
