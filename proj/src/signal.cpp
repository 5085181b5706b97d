// SPDX-License-Identifier: Apache-2.0
#include "singflow/signal.hpp"

#include "singflow/fft.hpp"
#include "singflow/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

namespace singflow {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put_tag(std::vector<unsigned char>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

std::vector<double> periodic_hann(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  }
  return w;
}

}  // namespace

// ---------------------------------------------------------------------------
// WAV

Waveform load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open WAV file: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DataError("not a RIFF/WAVE file: " + path.string());
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  bool have_fmt = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t available = bytes.size() - body;
    const std::size_t usable = std::min<std::size_t>(size, available);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (usable < 16) throw DataError("truncated fmt chunk: " + path.string());
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = read_u32(chunk + 12);
      bits = read_u16(chunk + 22);
      if (format == kFormatExtensible) {
        if (usable < 26) throw DataError("truncated extensible fmt chunk: " + path.string());
        format = read_u16(chunk + 8 + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = usable;
    }
    pos = body + size + (size & 1U);
  }

  if (!have_fmt || data == nullptr) throw DataError("missing fmt or data chunk: " + path.string());
  if (channels == 0 || rate == 0) throw DataError("invalid channel count or rate: " + path.string());
  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool float32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !float32) {
    throw DataError("unsupported WAV encoding (need 16-bit PCM or 32-bit float): " +
                    path.string());
  }

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frames = data_size / (bytes_per_sample * channels);
  if (frames == 0) throw DataError("zero-length audio: " + path.string());

  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t ch = 0; ch < channels; ++ch) {
      const unsigned char* p = data + (i * channels + ch) * bytes_per_sample;
      if (pcm16) {
        acc += static_cast<std::int16_t>(read_u16(p)) / 32768.0;
      } else {
        const std::uint32_t raw = read_u32(p);
        float f;
        std::memcpy(&f, &raw, sizeof f);
        acc += f;
      }
    }
    w.samples[i] = static_cast<float>(acc / channels);
  }
  return w;
}

void save_wav(const Waveform& w, const std::filesystem::path& path, WavEncoding encoding) {
  if (w.empty()) throw DataError("cannot write empty waveform: " + path.string());
  if (w.sample_rate <= 0) throw DataError("invalid sample rate for " + path.string());
  for (float s : w.samples) {
    if (!std::isfinite(s)) throw DataError("non-finite sample in waveform for " + path.string());
  }

  const bool pcm16 = encoding == WavEncoding::kPcm16;
  const std::uint16_t bits = pcm16 ? 16 : 32;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(w.size() * (bits / 8));

  std::vector<unsigned char> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, pcm16 ? kFormatPcm : kFormatFloat);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * (bits / 8));
  put_u16(out, bits / 8);
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (float s : w.samples) {
    if (pcm16) {
      const double q = std::clamp(std::nearbyint(static_cast<double>(s) * 32768.0), -32768.0, 32767.0);
      put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
    } else {
      std::uint32_t raw;
      std::memcpy(&raw, &s, sizeof raw);
      put_u32(out, raw);
    }
  }

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write WAV file: " + path.string());
  os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!os) throw DataError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Mel analysis

void MelConfig::validate() const {
  if (sample_rate <= 0) throw ConfigError("mel: sample_rate must be positive");
  if (n_fft < 4) throw ConfigError("mel: n_fft must be >= 4");
  if (hop <= 0) throw ConfigError("mel: hop must be positive");
  if (n_mels < 1) throw ConfigError("mel: n_mels must be >= 1");
  if (f_min < 0.0 || effective_f_max() <= f_min || effective_f_max() > 0.5 * sample_rate + 1e-9) {
    throw ConfigError("mel: need 0 <= f_min < f_max <= Nyquist");
  }
  if (!(log_floor > 0.0)) throw ConfigError("mel: log_floor must be positive");
}

MelConfig reduced_mel_config() {
  MelConfig cfg;
  cfg.sample_rate = 8000;
  cfg.n_fft = 256;
  cfg.hop = 64;
  cfg.n_mels = 16;
  return cfg;
}

std::size_t frame_count(std::size_t num_samples, int hop) {
  const auto h = static_cast<std::size_t>(hop);
  return (num_samples + h - 1) / h;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank::MelFilterbank(const MelConfig& cfg) {
  cfg.validate();
  const int bins = cfg.n_bins();
  const double mel_lo = hz_to_mel(cfg.f_min);
  const double mel_hi = hz_to_mel(cfg.effective_f_max());
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(cfg.n_mels + 1));
  }
  centers_.assign(edges.begin() + 1, edges.end() - 1);
  weights_ = Mat::Zero(cfg.n_mels, bins);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double lo = edges[static_cast<std::size_t>(m)];
    const double mid = edges[static_cast<std::size_t>(m) + 1];
    const double hi = edges[static_cast<std::size_t>(m) + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / cfg.n_fft;
      double v = 0.0;
      if (f > lo && f <= mid) {
        v = (f - lo) / (mid - lo);
      } else if (f > mid && f < hi) {
        v = (hi - f) / (hi - mid);
      }
      weights_(m, k) = v;
    }
  }
}

Mat MelFilterbank::pseudo_inverse(double relative_reg) const {
  const Mat gram = weights_ * weights_.transpose();
  const double reg = relative_reg * gram.trace() / static_cast<double>(gram.rows());
  const Mat regularized = gram + reg * Mat::Identity(gram.rows(), gram.cols());
  return weights_.transpose() * regularized.ldlt().solve(Mat::Identity(gram.rows(), gram.cols()));
}

ComplexFrames stft(std::span<const double> x, int n_fft, int hop, std::size_t num_frames) {
  const auto window = periodic_hann(n_fft);
  RealFft fft(static_cast<std::size_t>(n_fft));
  ComplexFrames out(static_cast<Eigen::Index>(num_frames), n_fft / 2 + 1);
  std::vector<double> frame(static_cast<std::size_t>(n_fft));
  std::vector<std::complex<double>> spec(fft.bins());
  const auto len = static_cast<std::ptrdiff_t>(x.size());
  for (std::size_t t = 0; t < num_frames; ++t) {
    const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(t) * hop - n_fft / 2;
    for (int i = 0; i < n_fft; ++i) {
      const std::ptrdiff_t idx = start + i;
      const double s = (idx >= 0 && idx < len) ? x[static_cast<std::size_t>(idx)] : 0.0;
      frame[static_cast<std::size_t>(i)] = s * window[static_cast<std::size_t>(i)];
    }
    fft.forward(frame, spec);
    for (std::size_t k = 0; k < spec.size(); ++k) {
      out(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) = spec[k];
    }
  }
  return out;
}

std::vector<double> istft(const ComplexFrames& frames, int n_fft, int hop, std::size_t length) {
  const auto window = periodic_hann(n_fft);
  RealFft fft(static_cast<std::size_t>(n_fft));
  std::vector<double> out(length, 0.0);
  std::vector<double> norm(length, 0.0);
  std::vector<std::complex<double>> spec(fft.bins());
  std::vector<double> frame(static_cast<std::size_t>(n_fft));
  const auto len = static_cast<std::ptrdiff_t>(length);
  for (Eigen::Index t = 0; t < frames.rows(); ++t) {
    for (std::size_t k = 0; k < spec.size(); ++k) spec[k] = frames(t, static_cast<Eigen::Index>(k));
    fft.inverse(spec, frame);
    const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(t) * hop - n_fft / 2;
    for (int i = 0; i < n_fft; ++i) {
      const std::ptrdiff_t idx = start + i;
      if (idx < 0 || idx >= len) continue;
      const double w = window[static_cast<std::size_t>(i)];
      out[static_cast<std::size_t>(idx)] += frame[static_cast<std::size_t>(i)] * w;
      norm[static_cast<std::size_t>(idx)] += w * w;
    }
  }
  for (std::size_t i = 0; i < length; ++i) {
    if (norm[i] > 1e-8) out[i] /= norm[i];
  }
  return out;
}

MelSpectrogram mel_spectrogram(const Waveform& w, const MelConfig& cfg) {
  cfg.validate();
  if (w.empty()) throw DataError("mel_spectrogram: empty waveform");
  if (w.sample_rate != cfg.sample_rate) {
    throw DataError("mel_spectrogram: sample rate " + std::to_string(w.sample_rate) +
                    " does not match config " + std::to_string(cfg.sample_rate));
  }
  const MelFilterbank bank(cfg);
  const auto x = to_double(w);
  const auto spec = stft(x, cfg.n_fft, cfg.hop, frame_count(x.size(), cfg.hop));
  const Mat power = spec.cwiseAbs2();
  MelSpectrogram m;
  m.frames = ((power * bank.weights().transpose()).array() + cfg.log_floor).log().matrix();
  m.hop = cfg.hop;
  m.sample_rate = cfg.sample_rate;
  m.n_fft = cfg.n_fft;
  return m;
}

// ---------------------------------------------------------------------------
// Pitch

std::size_t F0Contour::voiced_count() const {
  return static_cast<std::size_t>(std::count(voiced.begin(), voiced.end(), true));
}

F0Contour extract_f0(const Waveform& w, double f_min, double f_max, int hop, double threshold) {
  if (!(f_min > 0.0) || !(f_min < f_max)) throw DataError("extract_f0: need 0 < f_min < f_max");
  if (hop <= 0) throw DataError("extract_f0: hop must be positive");
  if (w.sample_rate <= 0) throw DataError("extract_f0: invalid sample rate");
  if (f_max > 0.5 * w.sample_rate) throw DataError("extract_f0: f_max above Nyquist");

  const double sr = w.sample_rate;
  const int tau_min = std::max(2, static_cast<int>(std::floor(sr / f_max)));
  const int tau_max = std::max(tau_min + 2, static_cast<int>(std::ceil(sr / f_min)));
  const int window = tau_max;

  const auto x = to_double(w);
  const auto len = static_cast<std::ptrdiff_t>(x.size());
  auto sample = [&](std::ptrdiff_t i) { return (i >= 0 && i < len) ? x[static_cast<std::size_t>(i)] : 0.0; };

  const std::size_t frames = frame_count(x.size(), hop);
  F0Contour out;
  out.f0_hz.assign(frames, 0.0);
  out.voiced.assign(frames, false);

  std::vector<double> segment(static_cast<std::size_t>(window + tau_max + 1));
  std::vector<double> cmndf(static_cast<std::size_t>(tau_max + 2), 1.0);
  for (std::size_t t = 0; t < frames; ++t) {
    const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(t) * hop - window / 2;
    for (std::size_t j = 0; j < segment.size(); ++j) {
      segment[j] = sample(start + static_cast<std::ptrdiff_t>(j));
    }
    double running = 0.0;
    cmndf[0] = 1.0;
    for (int tau = 1; tau <= tau_max + 1; ++tau) {
      double d = 0.0;
      for (int j = 0; j < window; ++j) {
        const double diff = segment[static_cast<std::size_t>(j)] -
                            segment[static_cast<std::size_t>(j + tau)];
        d += diff * diff;
      }
      running += d;
      cmndf[static_cast<std::size_t>(tau)] = running > 0.0 ? d * tau / running : 1.0;
    }

    int best = -1;
    for (int tau = tau_min; tau <= tau_max; ++tau) {
      if (cmndf[static_cast<std::size_t>(tau)] < threshold) {
        while (tau + 1 <= tau_max &&
               cmndf[static_cast<std::size_t>(tau + 1)] < cmndf[static_cast<std::size_t>(tau)]) {
          ++tau;
        }
        best = tau;
        break;
      }
    }
    if (best < 0) continue;

    const double s0 = cmndf[static_cast<std::size_t>(best - 1)];
    const double s1 = cmndf[static_cast<std::size_t>(best)];
    const double s2 = cmndf[static_cast<std::size_t>(best + 1)];
    const double denom = s0 - 2.0 * s1 + s2;
    double refined = best;
    if (std::abs(denom) > 1e-12) refined += std::clamp(0.5 * (s0 - s2) / denom, -0.5, 0.5);
    const double f0 = sr / refined;
    if (f0 >= f_min && f0 <= f_max) {
      out.f0_hz[t] = f0;
      out.voiced[t] = true;
    }
  }
  return out;
}

F0Contour transpose_f0(const F0Contour& c, double semitones) {
  F0Contour out = c;
  const double ratio = std::exp2(semitones / 12.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out.voiced[i]) out.f0_hz[i] *= ratio;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mixing and inversion

Waveform mix_tracks(const Waveform& lead, const Waveform& other, double gain) {
  if (lead.sample_rate != other.sample_rate) {
    throw DataError("mix_tracks: sample-rate mismatch (" + std::to_string(lead.sample_rate) +
                    " vs " + std::to_string(other.sample_rate) + ")");
  }
  Waveform out;
  out.sample_rate = lead.sample_rate;
  out.samples.assign(std::max(lead.size(), other.size()), 0.0f);
  std::copy(lead.samples.begin(), lead.samples.end(), out.samples.begin());
  if (gain == 0.0) return out;
  for (std::size_t i = 0; i < other.size(); ++i) {
    const double l = i < lead.size() ? lead.samples[i] : 0.0;
    out.samples[i] = static_cast<float>(l + gain * other.samples[i]);
  }
  return out;
}

Waveform invert_mel(const MelSpectrogram& m, const MelConfig& cfg, int iters, std::uint64_t seed) {
  cfg.validate();
  if (m.num_channels() != cfg.n_mels || m.hop != cfg.hop || m.n_fft != cfg.n_fft ||
      m.sample_rate != cfg.sample_rate) {
    throw DataError("invert_mel: mel spectrogram does not match the mel config");
  }
  if (iters < 0) throw DataError("invert_mel: iters must be >= 0");
  const MelFilterbank bank(cfg);
  const Mat mel_power = (m.frames.array().exp() - cfg.log_floor).max(0.0).matrix();
  const Mat linear_power = (mel_power * bank.pseudo_inverse().transpose()).cwiseMax(0.0);
  const Mat magnitude = linear_power.cwiseSqrt();

  const auto frames = static_cast<std::size_t>(m.num_frames());
  const std::size_t length = frames * static_cast<std::size_t>(cfg.hop);

  ComplexFrames spec(magnitude.rows(), magnitude.cols());
  if (iters == 0) {
    spec = magnitude.cast<std::complex<double>>();
  } else {
    Rng rng(seed);
    for (Eigen::Index t = 0; t < spec.rows(); ++t) {
      for (Eigen::Index k = 0; k < spec.cols(); ++k) {
        spec(t, k) = std::polar(magnitude(t, k), 2.0 * std::numbers::pi * rng.uniform());
      }
    }
  }

  std::vector<double> signal = istft(spec, cfg.n_fft, cfg.hop, length);
  for (int it = 0; it < iters; ++it) {
    const ComplexFrames estimate = stft(signal, cfg.n_fft, cfg.hop, frames);
    for (Eigen::Index t = 0; t < spec.rows(); ++t) {
      for (Eigen::Index k = 0; k < spec.cols(); ++k) {
        const double a = std::abs(estimate(t, k));
        spec(t, k) = a > 1e-12 ? magnitude(t, k) * estimate(t, k) / a
                               : std::complex<double>(magnitude(t, k), 0.0);
      }
    }
    signal = istft(spec, cfg.n_fft, cfg.hop, length);
  }

  Waveform out;
  out.sample_rate = cfg.sample_rate;
  out.samples.resize(length);
  for (std::size_t i = 0; i < length; ++i) out.samples[i] = static_cast<float>(signal[i]);
  return out;
}

double rms(const Waveform& w) {
  if (w.empty()) return 0.0;
  double acc = 0.0;
  for (float s : w.samples) acc += static_cast<double>(s) * s;
  return std::sqrt(acc / static_cast<double>(w.size()));
}

std::vector<double> to_double(const Waveform& w) {
  return std::vector<double>(w.samples.begin(), w.samples.end());
}

}  // namespace singflow
