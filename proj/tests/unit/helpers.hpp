// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "singflow/core.hpp"
#include "singflow/rng.hpp"
#include "singflow/signal.hpp"

#include <cmath>
#include <cstring>
#include <numbers>

namespace singflow::testing {

inline Mat random_mat(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

inline Vec random_vec(Eigen::Index n, Rng& rng, double scale = 1.0) {
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

inline bool bit_equal(const Mat& a, const Mat& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

inline Waveform sine(double hz, double seconds, int sr, double amp = 0.5) {
  Waveform w{std::vector<float>(static_cast<std::size_t>(seconds * sr)), sr};
  for (std::size_t i = 0; i < w.size(); ++i) {
    w.samples[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / sr));
  }
  return w;
}

inline Waveform white_noise(double seconds, int sr, std::uint64_t seed, double amp = 0.3) {
  Rng rng(seed);
  Waveform w{std::vector<float>(static_cast<std::size_t>(seconds * sr)), sr};
  for (auto& s : w.samples) s = static_cast<float>(amp * rng.normal());
  return w;
}

}  // namespace singflow::testing
