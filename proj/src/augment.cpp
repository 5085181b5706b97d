// SPDX-License-Identifier: Apache-2.0
#include "singflow/augment.hpp"

#include <algorithm>
#include <cmath>

namespace singflow {

void PerturbConfig::validate() const {
  for (double p : {p_jitter, p_glide, p_jump}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("perturb: probabilities must lie in [0, 1]");
  }
  if (p_jitter + p_glide + p_jump > 1.0 + 1e-12) {
    throw ConfigError("perturb: kernel probabilities must sum to at most 1");
  }
  if (segments_min < 1 || segments_max < segments_min) {
    throw ConfigError("perturb: need 1 <= segments_min <= segments_max");
  }
  if (jitter_sigma < 0.0 || glide_len < 1 || glide_range < 0.0) {
    throw ConfigError("perturb: invalid kernel parameters");
  }
  if (p_jump > 0.0 && jump_deltas.empty()) throw ConfigError("perturb: jump kernel needs deltas");
  if (!(f_min > 0.0 && f_min < f_max)) throw ConfigError("perturb: invalid F0 bounds");
}

PerturbKernel draw_kernel(const PerturbConfig& cfg, Rng& rng) {
  const double u = rng.uniform();
  if (u < cfg.p_jitter) return PerturbKernel::kJitter;
  if (u < cfg.p_jitter + cfg.p_glide) return PerturbKernel::kGlide;
  if (u < cfg.p_jitter + cfg.p_glide + cfg.p_jump) return PerturbKernel::kJump;
  return PerturbKernel::kNone;
}

PerturbResult perturb_f0(const F0Contour& c, const PerturbConfig& cfg, Rng& rng) {
  cfg.validate();
  PerturbResult result;
  result.contour = c;

  std::vector<std::size_t> voiced;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c.voiced[i]) voiced.push_back(i);
  }
  if (voiced.empty()) {
    result.all_unvoiced = true;
    return result;
  }

  auto k = static_cast<std::size_t>(rng.uniform_int(cfg.segments_min, cfg.segments_max));
  k = std::min(k, voiced.size());

  // Split the voiced frames into k ordered chunks; each segment lives inside
  // its own chunk, which keeps segments disjoint.
  std::vector<double> offsets(c.size(), 0.0);
  for (std::size_t s = 0; s < k; ++s) {
    const std::size_t lo = s * voiced.size() / k;
    const std::size_t hi = (s + 1) * voiced.size() / k;
    const auto chunk = static_cast<std::int64_t>(hi - lo);
    const auto len = static_cast<std::size_t>(rng.uniform_int(1, chunk));
    const auto start = lo + static_cast<std::size_t>(rng.uniform_int(0, chunk - static_cast<std::int64_t>(len)));

    PerturbSegment seg;
    seg.begin = voiced[start];
    seg.end = voiced[start + len - 1] + 1;
    seg.kernel = draw_kernel(cfg, rng);

    switch (seg.kernel) {
      case PerturbKernel::kJitter:
        for (std::size_t j = 0; j < len; ++j) offsets[voiced[start + j]] = rng.normal(0.0, cfg.jitter_sigma);
        break;
      case PerturbKernel::kGlide: {
        const double target = rng.uniform(-cfg.glide_range, cfg.glide_range);
        for (std::size_t j = 0; j < len; ++j) {
          const double frac = std::min(1.0, static_cast<double>(j + 1) / cfg.glide_len);
          offsets[voiced[start + j]] = target * frac;
        }
        break;
      }
      case PerturbKernel::kJump: {
        const auto pick = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(cfg.jump_deltas.size()) - 1));
        for (std::size_t j = 0; j < len; ++j) offsets[voiced[start + j]] = cfg.jump_deltas[pick];
        break;
      }
      case PerturbKernel::kNone:
        break;
    }
    result.segments.push_back(seg);
  }

  for (std::size_t i : voiced) {
    if (offsets[i] == 0.0) continue;
    const double f = c.f0_hz[i] * std::exp2(offsets[i] / 12.0);
    result.contour.f0_hz[i] = std::clamp(f, cfg.f_min, cfg.f_max);
  }
  return result;
}

const char* to_string(PerturbKernel k) {
  switch (k) {
    case PerturbKernel::kJitter: return "jitter";
    case PerturbKernel::kGlide: return "glide";
    case PerturbKernel::kJump: return "jump";
    case PerturbKernel::kNone: break;
  }
  return "none";
}

}  // namespace singflow
