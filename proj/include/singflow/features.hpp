// SPDX-License-Identifier: Apache-2.0
//
// Turns waveforms into training examples: normalised mel targets, encoder
// outputs aligned to the mel frame grid, and the contaminated SFT variant.
#pragma once

#include "singflow/augment.hpp"
#include "singflow/encoders.hpp"
#include "singflow/rng.hpp"
#include "singflow/signal.hpp"

#include <optional>
#include <string>
#include <vector>

namespace singflow {

/// Global affine normalisation of log-mel values; the generator works in the
/// normalised space and the vocoder path undoes it.
struct MelNorm {
  double mean = 0.0;
  double scale = 1.0;

  Mat apply(const Mat& m) const { return ((m.array() - mean) / scale).matrix(); }
  Mat invert(const Mat& m) const { return (m.array() * scale + mean).matrix(); }
};

MelNorm estimate_mel_norm(const std::vector<Mat>& mels);

struct FeatureConfig {
  MelConfig mel;
  F0Config f0;
  F0EmbedConfig f0_embed;
  int content_dim = 64;
  int timbre_dim = 32;
  std::uint64_t encoder_seed = 17;
};

/// One conditioning/target tuple before the per-step mask, t and noise draws.
struct FlowExample {
  std::string id;
  Mat target;         // clean lead mel, normalised (T x C)
  Mat observed;       // mel the observed prefix is read from (mix for SFT)
  Vec e_global;       // timbre embedding of the conditioning audio
  Mat h_f0;           // T x D_f, possibly from a perturbed contour
  Mat content_orig;   // T x D_c
  Mat content_shift;  // T x D_c, from the timbre-shifted audio
  double alpha = 0.0;
  bool harmony_missing = false;
  std::vector<PerturbSegment> perturbations;

  Eigen::Index frames() const { return target.rows(); }
};

class FeaturePipeline {
 public:
  FeaturePipeline(FeatureConfig cfg, MelNorm norm, const TimbreShifter* shifter);

  const FeatureConfig& config() const { return cfg_; }
  const MelNorm& norm() const { return norm_; }
  const ContentEncoder& content_encoder() const { return content_; }
  const TimbreEncoder& timbre_encoder() const { return timbre_; }
  const TimbreShifter* shifter() const { return shifter_; }

  /// Raw log-mel (not normalised).
  Mat raw_mel(const Waveform& w) const;
  Mat mel(const Waveform& w) const { return norm_.apply(raw_mel(w)); }
  F0Contour f0(const Waveform& w) const;
  Mat f0_embedding(const F0Contour& c, Eigen::Index frames) const;
  /// Content features of a normalised mel, aligned to `frames`.
  Mat content(const Mat& norm_mel, Eigen::Index frames) const;
  Vec timbre(const Waveform& w) const;
  /// Content of T_shift(w) for a speaker drawn from `shift_rng`.
  Mat shifted_content(const Waveform& w, Eigen::Index frames, Rng& shift_rng) const;

  /// Unaugmented example: every condition comes from `lead`.
  FlowExample example(const std::string& id, const Waveform& lead, Rng& shift_rng) const;

  /// Conditions from x_mix = lead + alpha * harm with an optionally perturbed
  /// F0 contour; the target stays the clean lead mel. A missing harmony track
  /// falls back to alpha = 0 and sets `harmony_missing`.
  FlowExample contaminated(const std::string& id, const Waveform& lead, const Waveform* harm, double alpha,
                           const PerturbConfig* perturb, Rng& shift_rng, Rng& aug_rng) const;

 private:
  FeatureConfig cfg_;
  MelNorm norm_;
  ContentEncoder content_;
  TimbreEncoder timbre_;
  const TimbreShifter* shifter_;
};

FlowExample make_contaminated_batch(const FeaturePipeline& features, const std::string& id, const Waveform& lead,
                                    const Waveform* harm, double alpha, const PerturbConfig& cfg, Rng& shift_rng,
                                    Rng& aug_rng);

/// Harmony aligned to the lead's length (cropped or zero padded).
Waveform align_to(const Waveform& other, const Waveform& lead);

}  // namespace singflow
