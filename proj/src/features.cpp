// SPDX-License-Identifier: Apache-2.0
#include "singflow/features.hpp"

#include <cmath>

namespace singflow {

MelNorm estimate_mel_norm(const std::vector<Mat>& mels) {
  double sum = 0.0;
  double sq = 0.0;
  double n = 0.0;
  for (const Mat& m : mels) {
    sum += m.sum();
    sq += m.squaredNorm();
    n += static_cast<double>(m.size());
  }
  if (n == 0.0) throw DataError("mel normalisation: no frames");
  const double mean = sum / n;
  const double var = std::max(0.0, sq / n - mean * mean);
  return MelNorm{mean, std::max(std::sqrt(var), 1e-3)};
}

FeaturePipeline::FeaturePipeline(FeatureConfig cfg, MelNorm norm, const TimbreShifter* shifter)
    : cfg_(std::move(cfg)),
      norm_(norm),
      content_(cfg_.mel.n_mels, cfg_.content_dim, derive_seed(cfg_.encoder_seed, 0xCE)),
      timbre_(cfg_.mel, cfg_.timbre_dim, derive_seed(cfg_.encoder_seed, 0x7E)),
      shifter_(shifter) {
  if (!(norm_.scale > 0.0)) throw ConfigError("features: mel normalisation scale must be positive");
}

Mat FeaturePipeline::raw_mel(const Waveform& w) const { return mel_spectrogram(w, cfg_.mel).frames; }

F0Contour FeaturePipeline::f0(const Waveform& w) const {
  return extract_f0(w, cfg_.f0.f_min, cfg_.f0.f_max, cfg_.mel.hop, cfg_.f0.threshold);
}

Mat FeaturePipeline::f0_embedding(const F0Contour& c, Eigen::Index frames) const {
  return nn_interp(embed_f0(c, cfg_.f0_embed).frames, frames);
}

Mat FeaturePipeline::content(const Mat& norm_mel, Eigen::Index frames) const {
  return nn_interp(content_.encode_frames(norm_mel), frames);
}

Vec FeaturePipeline::timbre(const Waveform& w) const { return timbre_.encode(w).vector; }

Mat FeaturePipeline::shifted_content(const Waveform& w, Eigen::Index frames, Rng& shift_rng) const {
  const Waveform shifted = shift_timbre(w, shifter_, shift_rng);
  return content(mel(shifted), frames);
}

FlowExample FeaturePipeline::example(const std::string& id, const Waveform& lead, Rng& shift_rng) const {
  FlowExample ex = contaminated(id, lead, nullptr, 0.0, nullptr, shift_rng, shift_rng);
  ex.harmony_missing = false;
  return ex;
}

FlowExample FeaturePipeline::contaminated(const std::string& id, const Waveform& lead, const Waveform* harm,
                                          double alpha, const PerturbConfig* perturb, Rng& shift_rng,
                                          Rng& aug_rng) const {
  FlowExample ex;
  ex.id = id;
  ex.target = mel(lead);
  const Eigen::Index frames = ex.target.rows();

  Waveform cond = lead;
  if (harm == nullptr) {
    ex.harmony_missing = true;
    ex.alpha = 0.0;
  } else {
    if (harm->sample_rate != lead.sample_rate) throw DataError(id + ": harmony sample rate differs from lead");
    ex.alpha = alpha;
    if (alpha != 0.0) cond = mix_tracks(lead, align_to(*harm, lead), alpha);
  }

  ex.observed = ex.alpha != 0.0 ? mel(cond) : ex.target;
  ex.e_global = timbre(cond);
  ex.content_orig = content(ex.observed, frames);
  ex.content_shift = shifted_content(cond, frames, shift_rng);

  F0Contour contour = f0(cond);
  if (perturb != nullptr && perturb->enabled()) {
    PerturbResult r = perturb_f0(contour, *perturb, aug_rng);
    contour = std::move(r.contour);
    ex.perturbations = std::move(r.segments);
  }
  ex.h_f0 = f0_embedding(contour, frames);
  return ex;
}

FlowExample make_contaminated_batch(const FeaturePipeline& features, const std::string& id, const Waveform& lead,
                                    const Waveform* harm, double alpha, const PerturbConfig& cfg, Rng& shift_rng,
                                    Rng& aug_rng) {
  return features.contaminated(id, lead, harm, alpha, &cfg, shift_rng, aug_rng);
}

Waveform align_to(const Waveform& other, const Waveform& lead) {
  Waveform out;
  out.sample_rate = other.sample_rate;
  out.samples.assign(lead.size(), 0.0F);
  const std::size_t n = std::min(other.size(), lead.size());
  std::copy_n(other.samples.begin(), n, out.samples.begin());
  return out;
}

}  // namespace singflow
