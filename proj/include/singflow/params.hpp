// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "singflow/core.hpp"

#include <string>
#include <vector>

namespace singflow {

/// Named matrix slices over one flat parameter vector. Architectures hold a
/// layout and read weights out of whichever parameter vector they are given,
/// so policy snapshots are plain vectors.
class ParamLayout {
 public:
  struct Entry {
    std::string name;
    Eigen::Index offset;
    Eigen::Index rows;
    Eigen::Index cols;
  };

  int add(std::string name, Eigen::Index rows, Eigen::Index cols);

  Eigen::Map<const Mat> view(const Vec& theta, int id) const;
  Eigen::Map<Mat> view(Vec& theta, int id) const;

  Eigen::Index size() const { return size_; }
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
  Eigen::Index size_ = 0;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Mat silu(const Mat& x) {
  return x.unaryExpr([](double v) { return v * sigmoid(v); });
}

inline Mat silu_grad(const Mat& x) {
  return x.unaryExpr([](double v) {
    const double s = sigmoid(v);
    return s * (1.0 + v * (1.0 - s));
  });
}

}  // namespace singflow
