// SPDX-License-Identifier: Apache-2.0
#include "singflow/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <mutex>
#include <stdexcept>

namespace singflow {

namespace {
// The FFTW planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

RealFft::RealFft(std::size_t n) : n_(n) {
  if (n < 2) throw std::invalid_argument("RealFft: size must be >= 2");
  std::lock_guard lock(planner_mutex());
  time_ = fftw_alloc_real(n_);
  auto* freq = fftw_alloc_complex(bins());
  freq_ = freq;
  forward_plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n_), time_, freq, FFTW_ESTIMATE);
  inverse_plan_ = fftw_plan_dft_c2r_1d(static_cast<int>(n_), freq, time_, FFTW_ESTIMATE);
}

RealFft::~RealFft() {
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(forward_plan_));
  fftw_destroy_plan(static_cast<fftw_plan>(inverse_plan_));
  fftw_free(time_);
  fftw_free(freq_);
}

void RealFft::forward(std::span<const double> in, std::span<std::complex<double>> out) {
  std::copy(in.begin(), in.begin() + static_cast<std::ptrdiff_t>(n_), time_);
  fftw_execute(static_cast<fftw_plan>(forward_plan_));
  const auto* freq = static_cast<const fftw_complex*>(freq_);
  for (std::size_t k = 0; k < bins(); ++k) out[k] = {freq[k][0], freq[k][1]};
}

void RealFft::inverse(std::span<const std::complex<double>> in, std::span<double> out) {
  auto* freq = static_cast<fftw_complex*>(freq_);
  for (std::size_t k = 0; k < bins(); ++k) {
    freq[k][0] = in[k].real();
    freq[k][1] = in[k].imag();
  }
  // c2r destroys its input; the buffer is rewritten on every call.
  fftw_execute(static_cast<fftw_plan>(inverse_plan_));
  const double scale = 1.0 / static_cast<double>(n_);
  for (std::size_t i = 0; i < n_; ++i) out[i] = time_[i] * scale;
}

}  // namespace singflow
