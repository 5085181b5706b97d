// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace singflow {

// Frame matrices are rows = frames, cols = features/channels.
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;

// Exit-code classes used by the CLI: usage/config = 1, data = 2, plugin = 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class PluginError : public Error {
 public:
  using Error::Error;
};

// Non-finite values during training or sampling.
class NumericError : public DataError {
 public:
  using DataError::DataError;
};

inline bool all_finite(const Mat& m) { return m.allFinite(); }

}  // namespace singflow
