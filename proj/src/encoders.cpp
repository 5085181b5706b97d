// SPDX-License-Identifier: Apache-2.0
#include "singflow/encoders.hpp"

#include "singflow/fft.hpp"

#include <algorithm>
#include <cmath>

namespace singflow {

namespace {

Mat gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double scale, std::uint64_t seed) {
  Rng rng(seed);
  Mat m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
  }
  return m;
}

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

// ---------------------------------------------------------------------------
// Content

ContentEncoder::ContentEncoder(int mel_channels, int dim, std::uint64_t seed) {
  if (mel_channels < 1 || dim < 1) throw ConfigError("ContentEncoder: dimensions must be positive");
  const double scale = 1.0 / std::sqrt(2.0 * mel_channels);
  projection_ = gaussian_matrix(dim, 2 * mel_channels, scale, derive_seed(seed, 0xC0));
}

Mat ContentEncoder::encode_frames(const Mat& mel_frames) const {
  const Eigen::Index channels = mel_frames.cols();
  if (2 * channels != projection_.cols()) {
    throw DataError("ContentEncoder: mel channel count does not match encoder");
  }
  Mat stacked(mel_frames.rows(), 2 * channels);
  stacked.leftCols(channels) = mel_frames;
  stacked.rightCols(channels).setZero();
  if (mel_frames.rows() > 1) {
    stacked.bottomRightCorner(mel_frames.rows() - 1, channels) =
        mel_frames.bottomRows(mel_frames.rows() - 1) - mel_frames.topRows(mel_frames.rows() - 1);
  }
  return stacked * projection_.transpose();
}

ContentFeature ContentEncoder::encode(const MelSpectrogram& m) const {
  ContentFeature f;
  f.frames = encode_frames(m.frames);
  f.frame_rate = m.hop > 0 ? static_cast<double>(m.sample_rate) / m.hop : 0.0;
  return f;
}

// ---------------------------------------------------------------------------
// Timbre

TimbreEncoder::TimbreEncoder(MelConfig mel, int dim, std::uint64_t seed) : mel_(mel) {
  mel_.validate();
  if (dim < 1) throw ConfigError("TimbreEncoder: dim must be positive");
  const double scale = 1.0 / std::sqrt(2.0 * mel_.n_mels);
  projection_ = gaussian_matrix(dim, 2 * mel_.n_mels, scale, derive_seed(seed, 0x7B));
}

TimbreEmbedding TimbreEncoder::encode(const Waveform& w) const {
  if (w.duration() < kMinDuration) {
    throw DataError("encode_timbre: input shorter than 0.5 s");
  }
  return encode_mel(mel_spectrogram(w, mel_).frames);
}

TimbreEmbedding TimbreEncoder::encode_mel(const Mat& mel_frames) const {
  if (mel_frames.cols() != mel_.n_mels || mel_frames.rows() < 1) {
    throw DataError("encode_timbre: mel shape does not match encoder");
  }
  const RowVec mean = mel_frames.colwise().mean();
  const RowVec stddev =
      ((mel_frames.rowwise() - mean).array().square().colwise().mean()).sqrt().matrix();
  Vec stats(2 * mel_.n_mels);
  stats.head(mel_.n_mels) = (mean.array() - mean.mean()).matrix().transpose();
  stats.tail(mel_.n_mels) = stddev.transpose();
  Vec v = projection_ * stats;
  const double norm = v.norm();
  if (!(norm > 1e-12) || !std::isfinite(norm)) {
    throw DataError("encode_timbre: degenerate (zero) embedding");
  }
  return TimbreEmbedding{v / norm};
}

// ---------------------------------------------------------------------------
// F0

int f0_bucket(double f0_hz, const F0EmbedConfig& cfg) {
  if (!(f0_hz > 0.0)) return cfg.bins;
  const double semis = 12.0 * std::log2(f0_hz / cfg.f_min);
  const auto k = static_cast<int>(std::nearbyint(semis));
  return std::clamp(k, 0, cfg.bins - 1);
}

F0Embedding embed_f0(const F0Contour& c, const F0EmbedConfig& cfg) {
  if (cfg.bins < 2) throw ConfigError("embed_f0: bins must be >= 2");
  F0Embedding e;
  e.frames = Mat::Zero(static_cast<Eigen::Index>(c.size()), cfg.width());
  e.buckets.resize(c.size());
  for (std::size_t t = 0; t < c.size(); ++t) {
    const int k = c.voiced[t] ? f0_bucket(c.f0_hz[t], cfg) : cfg.bins;
    e.buckets[t] = k;
    e.frames(static_cast<Eigen::Index>(t), k) = 1.0;
  }
  return e;
}

// ---------------------------------------------------------------------------
// Timbre shifting

std::vector<double> cepstral_envelope(std::span<const double> magnitude, int lifter) {
  const std::size_t bins = magnitude.size();
  const std::size_t n = 2 * (bins - 1);
  RealFft fft(n);
  std::vector<std::complex<double>> spec(bins);
  for (std::size_t k = 0; k < bins; ++k) spec[k] = {std::log(magnitude[k] + 1e-9), 0.0};
  std::vector<double> cep(n);
  fft.inverse(spec, cep);
  const auto q = static_cast<std::size_t>(std::max(1, lifter));
  for (std::size_t i = q + 1; i + q < n; ++i) cep[i] = 0.0;
  fft.forward(cep, spec);
  std::vector<double> env(bins);
  for (std::size_t k = 0; k < bins; ++k) env[k] = std::exp(spec[k].real());
  return env;
}

FormantWarpShifter::FormantWarpShifter(FormantWarpConfig cfg) : cfg_(cfg) {
  if (cfg_.num_speakers < 1) throw ConfigError("formant-warp: need at least one speaker");
  if (!(cfg_.warp_min > 0.0) || cfg_.warp_max < cfg_.warp_min) {
    throw ConfigError("formant-warp: need 0 < warp_min <= warp_max");
  }
}

double FormantWarpShifter::warp_for(int speaker) const {
  if (speaker < 0 || speaker >= cfg_.num_speakers) throw DataError("formant-warp: speaker out of range");
  if (cfg_.num_speakers == 1) return std::sqrt(cfg_.warp_min * cfg_.warp_max);
  const double frac = static_cast<double>(speaker) / (cfg_.num_speakers - 1);
  return std::exp(std::log(cfg_.warp_min) + frac * (std::log(cfg_.warp_max) - std::log(cfg_.warp_min)));
}

Waveform FormantWarpShifter::shift(const Waveform& w, int speaker) const {
  return warp(w, warp_for(speaker));
}

Waveform FormantWarpShifter::warp(const Waveform& w, double factor) const {
  if (w.empty()) return w;
  const int n_fft = next_pow2(static_cast<int>(std::ceil(0.04 * w.sample_rate)));
  const int hop = n_fft / 4;
  const int lifter = std::max(2, static_cast<int>(std::lround(cfg_.lifter_ms * 1e-3 * w.sample_rate)));
  const auto x = to_double(w);
  const std::size_t frames = frame_count(x.size(), hop);
  ComplexFrames spec = stft(x, n_fft, hop, frames);
  const auto bins = static_cast<std::size_t>(spec.cols());

  std::vector<double> mag(bins);
  std::vector<double> warped(bins);
  for (Eigen::Index t = 0; t < spec.rows(); ++t) {
    for (std::size_t k = 0; k < bins; ++k) mag[k] = std::abs(spec(t, static_cast<Eigen::Index>(k)));
    const auto env = cepstral_envelope(mag, lifter);
    for (std::size_t k = 0; k < bins; ++k) {
      const double src = static_cast<double>(k) / factor;
      const auto lo = std::min(static_cast<std::size_t>(src), bins - 1);
      const std::size_t hi = std::min(lo + 1, bins - 1);
      const double frac = std::clamp(src - static_cast<double>(lo), 0.0, 1.0);
      warped[k] = (1.0 - frac) * env[lo] + frac * env[hi];
    }
    for (std::size_t k = 0; k < bins; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      spec(t, kk) *= warped[k] / env[k];
    }
  }
  const auto y = istft(spec, n_fft, hop, x.size());
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.assign(y.begin(), y.end());
  return out;
}

Waveform shift_timbre(const Waveform& w, const TimbreShifter* shifter, Rng& rng) {
  if (shifter == nullptr) throw PluginError("shift_timbre: no timbre shifter registered");
  const int speakers = shifter->num_speakers();
  if (speakers < 1) throw PluginError("shift_timbre: shifter reports no speakers");
  const auto speaker = static_cast<int>(rng.uniform_int(0, speakers - 1));
  return shifter->shift(w, speaker);
}

// ---------------------------------------------------------------------------
// Alignment

Mat nn_interp(const Mat& f, Eigen::Index target_len) {
  if (f.rows() < 1) throw DataError("nn_interp: empty input");
  if (target_len < 1) throw DataError("nn_interp: target length must be >= 1");
  const Eigen::Index t_in = f.rows();
  if (t_in == target_len) return f;
  Mat out(target_len, f.cols());
  for (Eigen::Index j = 0; j < target_len; ++j) {
    const Eigen::Index num = j * t_in;
    Eigen::Index q = num / target_len;
    const Eigen::Index r2 = 2 * (num % target_len);
    if (r2 > target_len || (r2 == target_len && (q % 2 == 1))) ++q;
    out.row(j) = f.row(std::min(q, t_in - 1));
  }
  return out;
}

}  // namespace singflow
