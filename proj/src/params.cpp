// SPDX-License-Identifier: Apache-2.0
#include "singflow/params.hpp"

#include <cassert>

namespace singflow {

int ParamLayout::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
  entries_.push_back(Entry{std::move(name), size_, rows, cols});
  size_ += rows * cols;
  return static_cast<int>(entries_.size()) - 1;
}

Eigen::Map<const Mat> ParamLayout::view(const Vec& theta, int id) const {
  const Entry& e = entries_[static_cast<std::size_t>(id)];
  assert(theta.size() == size_);
  return {theta.data() + e.offset, e.rows, e.cols};
}

Eigen::Map<Mat> ParamLayout::view(Vec& theta, int id) const {
  const Entry& e = entries_[static_cast<std::size_t>(id)];
  assert(theta.size() == size_);
  return {theta.data() + e.offset, e.rows, e.cols};
}

}  // namespace singflow
