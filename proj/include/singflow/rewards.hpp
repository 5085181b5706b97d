// SPDX-License-Identifier: Apache-2.0
//
// Perceptual reward families for RL post-training. External scorers sit
// behind small interfaces; the in-process stand-ins keep the loop runnable
// offline.
#pragma once

#include "singflow/encoders.hpp"
#include "singflow/signal.hpp"

#include <span>
#include <string>
#include <vector>

namespace singflow {

struct AestheticScore {
  double content_enjoyment = 0.0;
  double content_usefulness = 0.0;
};

class AestheticScorer {
 public:
  virtual ~AestheticScorer() = default;
  virtual AestheticScore score(const Waveform& w) const = 0;
  /// Declared raw score range used for [0, 1] normalisation.
  virtual double range_min() const { return 1.0; }
  virtual double range_max() const { return 10.0; }
  virtual std::string name() const = 0;
};

class Transcriber {
 public:
  virtual ~Transcriber() = default;
  virtual std::string transcribe(const Waveform& w) const = 0;
  virtual std::string name() const = 0;
};

class TimbreEmbedder {
 public:
  virtual ~TimbreEmbedder() = default;
  virtual Vec embed(const Waveform& w) const = 0;
  virtual std::string name() const = 0;
};

/// ((CE + CU) / 2 - lo) / (hi - lo), clamped to [0, 1].
double normalize_aesthetic(const AestheticScore& s, double lo, double hi);
double reward_aesthetic(const Waveform& w, const AestheticScorer& scorer);

enum class TokenLevel { kWord, kChar };
TokenLevel parse_token_level(const std::string& s);
std::string to_string(TokenLevel level);

/// Whitespace-separated words, or UTF-8 code points with whitespace removed.
std::vector<std::string> tokenize(const std::string& text, TokenLevel level);
std::size_t edit_distance(std::span<const std::string> ref, std::span<const std::string> hyp);
/// Edit distance over reference length; an empty reference gives 0 for an
/// empty hypothesis and 1 otherwise.
double error_rate(const std::string& ref, const std::string& hyp, TokenLevel level);
double reward_intelligibility(const Waveform& w, const std::string& ref_text, const Transcriber& asr,
                              TokenLevel level = TokenLevel::kWord);

double cosine_similarity(const Vec& a, const Vec& b);
/// (1 + cos) / 2.
double reward_speaker(const Waveform& gen, const Waveform& ref, const TimbreEmbedder& embedder);

struct RewardVector {
  double aesthetic = 0.0;
  double intelligibility = 0.0;
  double speaker = 0.0;
  double total = 0.0;
};

struct RewardWeights {
  double aesthetic = 1.0;
  double intelligibility = 1.0;
  double speaker = 1.0;
};

std::vector<RewardVector> aggregate_rewards(std::span<const double> aesthetic, std::span<const double> intelligibility,
                                            std::span<const double> speaker, const RewardWeights& w);

// ---------------------------------------------------------------------------
// Desk-scale stand-ins

/// Geometric over arithmetic mean of the power spectrum (whole signal).
double spectral_flatness(const Waveform& w, int n_fft = 512);

/// CE = CU = 1 + 9 * (1 - flatness); tonal audio scores high.
class TonalityScorer final : public AestheticScorer {
 public:
  AestheticScore score(const Waveform& w) const override;
  std::string name() const override { return "tonality"; }
};

class EncoderEmbedder final : public TimbreEmbedder {
 public:
  explicit EncoderEmbedder(const TimbreEncoder& encoder) : encoder_(encoder) {}
  Vec embed(const Waveform& w) const override { return encoder_.encode(w).vector; }
  std::string name() const override { return "timbre-encoder"; }

 private:
  const TimbreEncoder& encoder_;
};

/// 1 / (1 + d) with d the mean per-frame RMS distance between two content
/// feature maps (aligned to the first one's length).
double content_intelligibility(const Mat& generated, const Mat& source);

}  // namespace singflow
