// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstddef>
#include <span>

namespace singflow {

// Real-input FFT of fixed size backed by an FFTW plan. Plans use
// FFTW_ESTIMATE so repeated runs pick the same algorithm.
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const { return n_; }
  std::size_t bins() const { return n_ / 2 + 1; }

  // in: n samples; out: n/2+1 bins.
  void forward(std::span<const double> in, std::span<std::complex<double>> out);
  // in: n/2+1 bins; out: n samples, scaled by 1/n.
  void inverse(std::span<const std::complex<double>> in, std::span<double> out);

 private:
  std::size_t n_;
  double* time_;
  void* freq_;
  void* forward_plan_;
  void* inverse_plan_;
};

}  // namespace singflow
