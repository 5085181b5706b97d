// SPDX-License-Identifier: Apache-2.0
#include "singflow/sampler.hpp"

#include "singflow/conditioning.hpp"

#include <cmath>
#include <numbers>

namespace singflow {

void SamplerConfig::validate() const {
  if (n_steps < 1) throw ConfigError("sampler: n_steps must be >= 1");
  if (!(t_min > 0.0 && t_min < t_max && t_max < 1.0)) throw ConfigError("sampler: need 0 < t_min < t_max < 1");
  if (!(noise_level >= 0.0)) throw ConfigError("sampler: noise level must be >= 0");
  if (sde_step_min < 0 || sde_step_max < sde_step_min || sde_step_max > n_steps - 1) {
    throw ConfigError("sampler: sde step range must lie within [0, n_steps - 1]");
  }
  if (s_window < 1) throw ConfigError("sampler: s_window must be >= 1");
}

std::vector<double> time_grid(const SamplerConfig& cfg) {
  std::vector<double> grid(static_cast<std::size_t>(cfg.n_steps) + 1);
  for (int i = 0; i <= cfg.n_steps; ++i) {
    grid[static_cast<std::size_t>(i)] =
        cfg.t_max + (cfg.t_min - cfg.t_max) * static_cast<double>(i) / static_cast<double>(cfg.n_steps);
  }
  grid.back() = cfg.t_min;
  return grid;
}

double sigma_schedule(double t, double a, double t_min, double t_max) {
  if (!(t >= t_min && t <= t_max)) throw DataError("sigma_schedule: t outside the clamp bounds");
  return a * std::sqrt(t / (1.0 - t));
}

Mat score_from_velocity(const Mat& x, const Mat& v, double t, double t_min) {
  if (!(t >= t_min)) throw DataError("score_from_velocity: t below t_min");
  return -(x + (1.0 - t) * v) / t;
}

Mat ode_step(const Mat& x, double t_from, double t_to, const VelocityFn& velocity) {
  const Mat v = velocity(x, t_from);
  if (!v.allFinite()) throw NumericError("ode_step: non-finite velocity");
  return x + v * (t_to - t_from);
}

Mat sde_mean(const Mat& x, const Mat& v, double t_from, double t_to, double sigma) {
  // f = v - sigma^2 / 2 * score = v + sigma^2 / (2 t) * (x + (1 - t) v)
  const Mat drift = v + (sigma * sigma / (2.0 * t_from)) * (x + (1.0 - t_from) * v);
  if (!drift.allFinite()) throw NumericError("sde_step: non-finite drift");
  return x + drift * (t_to - t_from);
}

SdeMoments sde_moments(const Mat& x, const Mat& v, double t_from, double t_to, double a) {
  SdeMoments m;
  m.sigma = a * std::sqrt(t_from / (1.0 - t_from));
  m.std = m.sigma * std::sqrt(std::abs(t_to - t_from));
  m.mean = sde_mean(x, v, t_from, t_to, m.sigma);
  return m;
}

double sde_mean_velocity_gain(double t_from, double t_to, double sigma) {
  return (t_to - t_from) * (1.0 + sigma * sigma * (1.0 - t_from) / (2.0 * t_from));
}

double gaussian_logprob(const Mat& x, const Mat& mean, double std) {
  const double var = std * std;
  const double n = static_cast<double>(x.size());
  return -(x - mean).squaredNorm() / (2.0 * var) - 0.5 * n * std::log(2.0 * std::numbers::pi * var);
}

SdeStepResult sde_step(const Mat& x, double t_from, double t_to, const VelocityFn& velocity, double a,
                       const Mat& z) {
  if (!(a > 0.0)) throw DataError("sde_step: noise level must be positive (use ode_step)");
  if (z.rows() != x.rows() || z.cols() != x.cols()) throw DataError("sde_step: noise shape mismatch");
  const Mat v = velocity(x, t_from);
  if (!v.allFinite()) throw NumericError("sde_step: non-finite velocity");
  SdeMoments m = sde_moments(x, v, t_from, t_to, a);
  SdeStepResult r;
  r.state = m.mean + m.std * z;
  r.logprob = gaussian_logprob(r.state, m.mean, m.std);
  r.mean = std::move(m.mean);
  r.sigma = m.sigma;
  r.std = m.std;
  return r;
}

SdeStepResult sde_step(const Mat& x, double t_from, double t_to, const VelocityFn& velocity, double a, Rng& rng) {
  return sde_step(x, t_from, t_to, velocity, a, standard_normal(x.rows(), x.cols(), rng));
}

Trajectory sample_trajectory_from(const VelocityFn& velocity, const Mat& x0, const SamplerConfig& cfg,
                                  std::optional<int> stoch_step, Rng& rng) {
  cfg.validate();
  if (stoch_step && (*stoch_step < cfg.sde_step_min || *stoch_step > cfg.sde_step_max)) {
    throw DataError("sample_trajectory: stochastic step outside the configured range");
  }
  Trajectory traj;
  traj.grid = time_grid(cfg);
  traj.stoch_step = stoch_step;
  traj.states.reserve(traj.grid.size());
  traj.states.push_back(x0);
  const bool noisy = stoch_step.has_value() && cfg.noise_level > 0.0;
  for (int i = 0; i < cfg.n_steps; ++i) {
    const Mat& x = traj.states.back();
    const double t_from = traj.grid[static_cast<std::size_t>(i)];
    const double t_to = traj.grid[static_cast<std::size_t>(i) + 1];
    const bool stochastic = noisy && i >= *stoch_step && i < *stoch_step + cfg.s_window;
    if (!stochastic) {
      traj.states.push_back(ode_step(x, t_from, t_to, velocity));
      continue;
    }
    SdeStepResult r = sde_step(x, t_from, t_to, velocity, cfg.noise_level, rng);
    Transition tr;
    tr.step = i;
    tr.x_in = x;
    tr.x_out = r.state;
    tr.t_from = t_from;
    tr.t_to = t_to;
    tr.sigma = r.sigma;
    tr.std = r.std;
    tr.logprob = r.logprob;
    traj.step_logprob += r.logprob;
    traj.transitions.push_back(std::move(tr));
    traj.states.push_back(std::move(r.state));
  }
  return traj;
}

Trajectory sample_trajectory(const VelocityFn& velocity, Eigen::Index rows, Eigen::Index cols,
                             const SamplerConfig& cfg, std::optional<int> stoch_step, std::uint64_t noise_seed,
                             Rng& rng) {
  Rng noise(noise_seed);
  Trajectory traj = sample_trajectory_from(velocity, standard_normal(rows, cols, noise), cfg, stoch_step, rng);
  traj.noise_seed = noise_seed;
  return traj;
}

}  // namespace singflow
