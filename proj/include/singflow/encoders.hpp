// SPDX-License-Identifier: Apache-2.0
//
// Frozen feature extractors (content, timbre, F0), the timbre-shifter plugin
// boundary with its formant-warp stand-in, and nearest-neighbour alignment.
#pragma once

#include "singflow/core.hpp"
#include "singflow/rng.hpp"
#include "singflow/signal.hpp"

#include <memory>
#include <string>
#include <vector>

namespace singflow {

struct ContentFeature {
  Mat frames;  // T_c x D_c
  double frame_rate = 0.0;
};

struct TimbreEmbedding {
  Vec vector;  // unit norm
};

struct F0Embedding {
  Mat frames;                // T x (bins + 1), one-hot rows
  std::vector<int> buckets;  // column index per frame; `bins` marks unvoiced
};

/// Fixed random projection of per-frame log-mel and its first difference.
class ContentEncoder {
 public:
  ContentEncoder(int mel_channels, int dim, std::uint64_t seed);

  ContentFeature encode(const MelSpectrogram& m) const;
  /// Same projection applied to a raw frame matrix.
  Mat encode_frames(const Mat& mel_frames) const;

  int dim() const { return static_cast<int>(projection_.rows()); }
  const Mat& projection() const { return projection_; }

 private:
  Mat projection_;  // D_c x 2C
};

/// Long-term mel statistics (channel-centred mean, std) projected to d dims
/// and unit-normalised.
class TimbreEncoder {
 public:
  TimbreEncoder(MelConfig mel, int dim, std::uint64_t seed);

  static constexpr double kMinDuration = 0.5;

  TimbreEmbedding encode(const Waveform& w) const;
  TimbreEmbedding encode_mel(const Mat& mel_frames) const;
  int dim() const { return static_cast<int>(projection_.rows()); }
  const MelConfig& mel_config() const { return mel_; }

 private:
  MelConfig mel_;
  Mat projection_;  // d x 2C
};

/// Semitone quantiser: bucket k covers f_min * 2^(k/12), rounded to nearest.
struct F0EmbedConfig {
  double f_min = 50.0;
  int bins = 54;
  int width() const { return bins + 1; }
};

int f0_bucket(double f0_hz, const F0EmbedConfig& cfg);
F0Embedding embed_f0(const F0Contour& c, const F0EmbedConfig& cfg);

/// Plugin boundary for the random-target timbre shifter.
class TimbreShifter {
 public:
  virtual ~TimbreShifter() = default;
  virtual int num_speakers() const = 0;
  virtual Waveform shift(const Waveform& w, int speaker) const = 0;
  virtual std::string name() const = 0;
};

class IdentityShifter final : public TimbreShifter {
 public:
  int num_speakers() const override { return 1; }
  Waveform shift(const Waveform& w, int) const override { return w; }
  std::string name() const override { return "identity"; }
};

struct FormantWarpConfig {
  int num_speakers = 120;
  double warp_min = 0.8;
  double warp_max = 1.25;
  double lifter_ms = 1.2;
};

/// Cepstral-envelope warping: the spectral envelope is stretched by a
/// per-speaker factor while the harmonic fine structure (and so F0) is kept.
class FormantWarpShifter final : public TimbreShifter {
 public:
  explicit FormantWarpShifter(FormantWarpConfig cfg = {});

  int num_speakers() const override { return cfg_.num_speakers; }
  Waveform shift(const Waveform& w, int speaker) const override;
  std::string name() const override { return "formant-warp"; }

  double warp_for(int speaker) const;
  Waveform warp(const Waveform& w, double factor) const;

 private:
  FormantWarpConfig cfg_;
};

/// Picks s_rand uniformly from the shifter's speaker set.
Waveform shift_timbre(const Waveform& w, const TimbreShifter* shifter, Rng& rng);

/// Cepstrally smoothed magnitude envelope of one spectrum (bins = n/2+1).
std::vector<double> cepstral_envelope(std::span<const double> magnitude, int lifter);

/// Row j of the result is row round(j * T_in / target_len) of f (ties to
/// even), clamped to the last row.
Mat nn_interp(const Mat& f, Eigen::Index target_len);

}  // namespace singflow
