// SPDX-License-Identifier: Apache-2.0
//
// Reverse-time integrators for the rectified-flow generator. Time runs from
// noise (t = 1) toward data (t = 0); every step uses Euler or Euler-Maruyama.
#pragma once

#include "singflow/core.hpp"
#include "singflow/rng.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace singflow {

struct SamplerConfig {
  int n_steps = 10;
  double t_min = 0.01;
  double t_max = 0.99;
  double noise_level = 0.4;  // a
  int sde_step_min = 0;
  int sde_step_max = 6;
  int s_window = 1;  // consecutive stochastic transitions starting at t'

  void validate() const;
};

/// v(x, t) for a fixed condition and parameter snapshot.
using VelocityFn = std::function<Mat(const Mat& x, double t)>;

/// n_steps + 1 times, uniform from t_max down to t_min.
std::vector<double> time_grid(const SamplerConfig& cfg);

/// sigma_t = a * sqrt(t / (1 - t)); throws outside [t_min, t_max].
double sigma_schedule(double t, double a, double t_min = 0.01, double t_max = 0.99);

/// Marginal score implied by the straight path: -(x + (1 - t) v) / t.
Mat score_from_velocity(const Mat& x, const Mat& v, double t, double t_min = 0.01);

Mat ode_step(const Mat& x, double t_from, double t_to, const VelocityFn& velocity);

/// Mean and per-entry std of one Euler-Maruyama transition given v(x, t_from).
struct SdeMoments {
  Mat mean;
  double sigma = 0.0;  // sigma_{t_from}
  double std = 0.0;    // sigma * sqrt(|dt|)
};

SdeMoments sde_moments(const Mat& x, const Mat& v, double t_from, double t_to, double a);
/// x + dt * (v + sigma^2 / (2 t) * (x + (1 - t) v)).
Mat sde_mean(const Mat& x, const Mat& v, double t_from, double t_to, double sigma);
/// d mean / d v, the same scalar for every entry.
double sde_mean_velocity_gain(double t_from, double t_to, double sigma);

/// Sum over entries of log N(x; mean, std^2).
double gaussian_logprob(const Mat& x, const Mat& mean, double std);

struct SdeStepResult {
  Mat state;
  Mat mean;
  double sigma = 0.0;
  double std = 0.0;
  double logprob = 0.0;
};

SdeStepResult sde_step(const Mat& x, double t_from, double t_to, const VelocityFn& velocity, double a, Rng& rng);
/// Same step with caller-supplied standard normal draws.
SdeStepResult sde_step(const Mat& x, double t_from, double t_to, const VelocityFn& velocity, double a,
                       const Mat& z);

struct Transition {
  int step = 0;
  Mat x_in;
  Mat x_out;
  double t_from = 0.0;
  double t_to = 0.0;
  double sigma = 0.0;
  double std = 0.0;
  double logprob = 0.0;
};

struct Trajectory {
  std::vector<Mat> states;  // n_steps + 1
  std::vector<double> grid;
  std::optional<int> stoch_step;
  std::vector<Transition> transitions;
  double step_logprob = 0.0;
  std::uint64_t noise_seed = 0;

  const Mat& final_state() const { return states.back(); }
};

/// Initial state from `noise_seed`; ODE steps everywhere except the
/// s_window transitions starting at `stoch_step`, whose noise comes from
/// `rng`. With a = 0 every step is deterministic and no transition is kept.
Trajectory sample_trajectory(const VelocityFn& velocity, Eigen::Index rows, Eigen::Index cols,
                             const SamplerConfig& cfg, std::optional<int> stoch_step, std::uint64_t noise_seed,
                             Rng& rng);

/// Same, starting from a caller-provided x at t_max.
Trajectory sample_trajectory_from(const VelocityFn& velocity, const Mat& x0, const SamplerConfig& cfg,
                                  std::optional<int> stoch_step, Rng& rng);

}  // namespace singflow
