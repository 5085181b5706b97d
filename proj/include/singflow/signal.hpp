// SPDX-License-Identifier: Apache-2.0
//
// Waveform I/O, log-mel analysis, YIN pitch tracking, track mixing and a
// Griffin-Lim mel inverter used as the fallback vocoder.
#pragma once

#include "singflow/core.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace singflow {

/// Mono audio. Samples are nominally in [-1, 1].
struct Waveform {
  std::vector<float> samples;
  int sample_rate = 0;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

enum class WavEncoding { kPcm16, kFloat32 };

/// Reads 16-bit PCM or 32-bit float WAV; stereo is averaged to mono.
Waveform load_wav(const std::filesystem::path& path);
void save_wav(const Waveform& w, const std::filesystem::path& path,
              WavEncoding encoding = WavEncoding::kPcm16);

struct MelConfig {
  int sample_rate = 44100;
  int n_fft = 2048;
  int hop = 512;
  int n_mels = 128;
  double f_min = 0.0;
  double f_max = 0.0;  // 0 selects Nyquist
  double log_floor = 1e-5;

  double effective_f_max() const { return f_max > 0.0 ? f_max : 0.5 * sample_rate; }
  int n_bins() const { return n_fft / 2 + 1; }
  void validate() const;
  bool operator==(const MelConfig&) const = default;
};

/// 16 bins at 8 kHz; used by tests and the toy corpus.
MelConfig reduced_mel_config();

struct MelSpectrogram {
  Mat frames;  // T x C, natural-log mel power
  int hop = 0;
  int sample_rate = 0;
  int n_fft = 0;

  Eigen::Index num_frames() const { return frames.rows(); }
  Eigen::Index num_channels() const { return frames.cols(); }
};

/// Frames are centered at i*hop, so T = ceil(len / hop).
std::size_t frame_count(std::size_t num_samples, int hop);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// HTK-scale triangular filterbank with unit-peak triangles.
class MelFilterbank {
 public:
  explicit MelFilterbank(const MelConfig& cfg);

  const Mat& weights() const { return weights_; }  // n_mels x n_bins
  const std::vector<double>& center_frequencies() const { return centers_; }
  /// Regularized minimum-norm inverse, n_bins x n_mels.
  Mat pseudo_inverse(double relative_reg = 1e-8) const;

 private:
  Mat weights_;
  std::vector<double> centers_;
};

using ComplexFrames = Eigen::MatrixXcd;  // T x bins

/// Periodic-Hann STFT with frames centered at i*hop (zero padded).
ComplexFrames stft(std::span<const double> x, int n_fft, int hop, std::size_t num_frames);
/// Weighted overlap-add inverse of stft(); returns `length` samples.
std::vector<double> istft(const ComplexFrames& frames, int n_fft, int hop, std::size_t length);

MelSpectrogram mel_spectrogram(const Waveform& w, const MelConfig& cfg);

struct F0Contour {
  std::vector<double> f0_hz;  // 0 where unvoiced
  std::vector<bool> voiced;

  std::size_t size() const { return f0_hz.size(); }
  std::size_t voiced_count() const;
};

struct F0Config {
  double f_min = 50.0;
  double f_max = 1100.0;
  double threshold = 0.15;
};

/// YIN cumulative-mean-normalized difference tracker with parabolic
/// refinement. One estimate per frame centered at i*hop.
F0Contour extract_f0(const Waveform& w, double f_min, double f_max, int hop,
                     double threshold = 0.15);

/// Voiced frames scaled by 2^(semitones/12).
F0Contour transpose_f0(const F0Contour& c, double semitones);

/// out[i] = lead[i] + gain * other[i]; the shorter track is zero padded.
Waveform mix_tracks(const Waveform& lead, const Waveform& other, double gain);

/// Griffin-Lim reconstruction from a log-mel spectrogram. iters == 0 gives a
/// zero-phase render; otherwise the initial phase is drawn from `seed`.
Waveform invert_mel(const MelSpectrogram& m, const MelConfig& cfg, int iters,
                    std::uint64_t seed = 0);

double rms(const Waveform& w);
std::vector<double> to_double(const Waveform& w);

}  // namespace singflow
