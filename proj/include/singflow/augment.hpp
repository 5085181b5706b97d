// SPDX-License-Identifier: Apache-2.0
//
// Robust-SFT F0 corruption: segment-wise jitter / glide / jump kernels applied
// in semitone space before the contour is embedded.
#pragma once

#include "singflow/rng.hpp"
#include "singflow/signal.hpp"

#include <vector>

namespace singflow {

enum class PerturbKernel { kNone, kJitter, kGlide, kJump };

struct PerturbConfig {
  double p_jitter = 0.1;
  double p_glide = 0.1;
  double p_jump = 0.3;
  int segments_min = 2;
  int segments_max = 4;
  double jitter_sigma = 0.5;   // semitones
  int glide_len = 20;          // frames
  double glide_range = 2.0;    // max |glide target| in semitones
  std::vector<double> jump_deltas{12.0, -12.0, 7.0, -7.0};
  // Perturbed voiced frames are clamped back into the tracker's range.
  double f_min = 50.0;
  double f_max = 1100.0;

  bool enabled() const { return p_jitter > 0.0 || p_glide > 0.0 || p_jump > 0.0; }
  void validate() const;
};

struct PerturbSegment {
  std::size_t begin = 0;  // frame range [begin, end)
  std::size_t end = 0;
  PerturbKernel kernel = PerturbKernel::kNone;
};

struct PerturbResult {
  F0Contour contour;
  std::vector<PerturbSegment> segments;
  bool all_unvoiced = false;  // input had no voiced frame; returned unchanged
};

PerturbKernel draw_kernel(const PerturbConfig& cfg, Rng& rng);

/// Draws K ~ U{segments_min..segments_max} disjoint voiced segments and
/// applies one independently drawn kernel to each. Unvoiced frames are never
/// modified.
PerturbResult perturb_f0(const F0Contour& c, const PerturbConfig& cfg, Rng& rng);

const char* to_string(PerturbKernel k);

}  // namespace singflow
