// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"
#include "helpers.hpp"
#include "toy_flow.hpp"

#include "singflow/grpo.hpp"
#include "singflow/rewards.hpp"
#include "singflow/sampler.hpp"

using namespace singflow;
using namespace singflow::testing;

namespace {

class FixedTranscriber final : public Transcriber {
 public:
  explicit FixedTranscriber(std::string text) : text_(std::move(text)) {}
  std::string transcribe(const Waveform&) const override { return text_; }
  std::string name() const override { return "fixed"; }

 private:
  std::string text_;
};

// Embeds a waveform as its first two samples.
class SampleEmbedder final : public TimbreEmbedder {
 public:
  Vec embed(const Waveform& w) const override { return Vec{{w.samples[0], w.samples[1]}}; }
  std::string name() const override { return "samples"; }
};

Waveform two_samples(float a, float b) { return Waveform{{a, b}, 8000}; }

// A group of stochastic rollouts on the two-point problem.
struct Fixture {
  Policy policy = toy::two_point_policy();
  PromptField field = bind_policy(policy, toy::empty_condition());
  Vec old_params = policy.init_params(9);
  SamplerConfig sampler;
  std::vector<RolloutGroup> groups;

  explicit Fixture(int members = 4, bool zero_advantages = false) {
    sampler.s_window = 2;
    RolloutGroup g;
    g.prompt_id = "p";
    g.field = field;
    g.stoch_step = 2;
    g.noise_seed = 31;
    const VelocityFn v = field.at(old_params);
    std::vector<double> totals;
    for (int i = 0; i < members; ++i) {
      Rng rng(100 + static_cast<std::uint64_t>(i));
      g.trajectories.push_back(sample_trajectory(v, 1, 1, sampler, g.stoch_step, g.noise_seed, rng));
      const double x = g.trajectories.back().final_state()(0, 0);
      totals.push_back(zero_advantages ? 1.0 : -std::abs(x - 1.0));
      g.rewards.push_back(RewardVector{0, 0, 0, totals.back()});
    }
    g.advantages = group_advantages(totals);
    groups.push_back(std::move(g));
  }

  Vec near(double scale, std::uint64_t seed) const {
    Rng rng(seed);
    return old_params + random_vec(old_params.size(), rng, scale);
  }
};

}  // namespace

TEST_SUITE("sampler") {
  TEST_CASE("time grid runs from t_max to t_min") {
    const SamplerConfig cfg;
    const auto g = time_grid(cfg);
    REQUIRE(g.size() == 11);
    CHECK(g.front() == 0.99);
    CHECK(g.back() == 0.01);
    for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i - 1] - g[i] == doctest::Approx(0.098));
  }

  TEST_CASE("sigma schedule") {
    CHECK(sigma_schedule(0.5, 0.4) == doctest::Approx(0.4));
    CHECK(sigma_schedule(0.8, 0.4) == doctest::Approx(0.8));
    CHECK(sigma_schedule(0.99, 1.0) == doctest::Approx(std::sqrt(99.0)));
    CHECK_THROWS_AS(sigma_schedule(0.995, 0.4), DataError);
    CHECK_THROWS_AS(sigma_schedule(0.0, 0.4), DataError);
  }

  TEST_CASE("SDE mean matches the score-corrected drift") {
    Rng rng(1);
    const Mat x = random_mat(3, 2, rng), v = random_mat(3, 2, rng);
    const double t = 0.7, t2 = 0.6, s = 0.5;
    const Mat score = score_from_velocity(x, v, t);
    const Mat expect = x + (t2 - t) * (v - 0.5 * s * s * score);
    CHECK((sde_mean(x, v, t, t2, s) - expect).cwiseAbs().maxCoeff() < 1e-12);
    const SdeMoments m = sde_moments(x, v, t, t2, 0.4);
    CHECK(m.sigma == doctest::Approx(sigma_schedule(t, 0.4)));
    CHECK(m.std == doctest::Approx(m.sigma * std::sqrt(0.1)));
  }

  TEST_CASE("velocity gain matches finite differences") {
    Rng rng(2);
    const Mat x = random_mat(2, 2, rng), v = random_mat(2, 2, rng);
    const double t = 0.5, t2 = 0.402, s = 0.6, h = 1e-6;
    Mat vp = v;
    vp(1, 0) += h;
    const double fd = (sde_mean(x, vp, t, t2, s)(1, 0) - sde_mean(x, v, t, t2, s)(1, 0)) / h;
    CHECK(sde_mean_velocity_gain(t, t2, s) == doctest::Approx(fd).epsilon(1e-6));
  }

  TEST_CASE("zero-noise step lands on the mean") {
    const VelocityFn v = [](const Mat& x, double) { return Mat(-x); };
    const Mat x = Mat::Constant(1, 3, 2.0);
    const SdeStepResult r = sde_step(x, 0.5, 0.4, v, 0.4, Mat::Zero(1, 3));
    CHECK(bit_equal(r.state, r.mean));
    CHECK(r.logprob == doctest::Approx(gaussian_logprob(r.mean, r.mean, r.std)));
  }

  TEST_CASE("trajectories keep s_window transitions and are seeded") {
    const VelocityFn v = [](const Mat& x, double) { return Mat(0.5 * x); };
    SamplerConfig cfg;
    cfg.s_window = 2;
    Rng r1(5), r2(5), r3(6);
    const Trajectory a = sample_trajectory(v, 2, 2, cfg, 3, 77, r1);
    const Trajectory b = sample_trajectory(v, 2, 2, cfg, 3, 77, r2);
    const Trajectory c = sample_trajectory(v, 2, 2, cfg, 3, 77, r3);
    CHECK(a.states.size() == 11);
    REQUIRE(a.transitions.size() == 2);
    CHECK(a.transitions[0].step == 3);
    CHECK(a.transitions[1].step == 4);
    CHECK(bit_equal(a.final_state(), b.final_state()));
    CHECK(bit_equal(a.states[3], c.states[3]));
    CHECK(!bit_equal(a.states[4], c.states[4]));
    cfg.noise_level = 0.0;
    CHECK(sample_trajectory(v, 2, 2, cfg, 3, 77, r1).transitions.empty());
  }

  TEST_CASE("ODE with zero velocity keeps the start state") {
    const VelocityFn v = [](const Mat& x, double) { return Mat(Mat::Zero(x.rows(), x.cols())); };
    Rng rng(0);
    const Trajectory t = sample_trajectory(v, 1, 4, SamplerConfig{}, std::nullopt, 3, rng);
    CHECK(bit_equal(t.final_state(), t.states.front()));
  }
}

TEST_SUITE("grpo") {
  TEST_CASE("group advantages are population standardised") {
    const std::vector<double> same{0.3, 0.3, 0.3};
    for (double a : group_advantages(same)) CHECK(a == 0.0);
    const std::vector<double> two{0.0, 1.0};
    CHECK(group_advantages(two) == std::vector<double>{-1.0, 1.0});
    const std::vector<double> four{1.0, 2.0, 3.0, 4.0};
    const auto a = group_advantages(four);
    double m = 0, v = 0;
    for (double x : a) m += x;
    for (double x : a) v += x * x;
    CHECK(m == doctest::Approx(0.0).scale(1.0));
    CHECK(v / 4 == doctest::Approx(1.0));
    CHECK_THROWS_AS(group_advantages(std::vector<double>{1.0}), DataError);
  }

  TEST_CASE("ratio is one and KL is zero at the old parameters") {
    Fixture f;
    const Trajectory& tr = f.groups[0].trajectories[0];
    CHECK(policy_ratio(f.field, tr, f.old_params, f.old_params) == 1.0);
    CHECK(kl_penalty(f.field, tr, f.old_params, f.old_params) == 0.0);
    CHECK(kl_penalty(f.field, tr, f.near(0.05, 1), f.old_params) > 0.0);
  }

  TEST_CASE("gradient matches finite differences of the objective") {
    Fixture f;
    for (bool clip : {false, true}) {
      RLConfig cfg;
      cfg.beta = 0.05;
      cfg.clip = clip;
      const Vec params = f.near(0.01, 2);
      const Vec ref = f.near(0.02, 3);
      GrpoMetrics m;
      const Vec g = grpo_gradient(f.groups, params, f.old_params, ref, cfg, m);
      CHECK(m.ratio_min > 0.8);
      CHECK(m.ratio_max < 1.2);
      Rng pick(4);
      for (int k = 0; k < 10; ++k) {
        const auto i = static_cast<Eigen::Index>(pick.uniform_int(0, params.size() - 1));
        const double h = 1e-6;
        Vec p = params, q = params;
        p[i] += h;
        q[i] -= h;
        GrpoMetrics mp, mq;
        grpo_gradient(f.groups, p, f.old_params, ref, cfg, mp);
        grpo_gradient(f.groups, q, f.old_params, ref, cfg, mq);
        const double fd = -(mp.objective - mq.objective) / (2 * h);
        CHECK(g[i] == doctest::Approx(fd).epsilon(1e-4).scale(1e-7));
      }
    }
  }

  TEST_CASE("zero clip range at the old policy gives the plain gradient") {
    Fixture f;
    RLConfig plain;
    plain.beta = 0.0;
    plain.clip = false;
    RLConfig tight = plain;
    tight.clip = true;
    tight.clip_eps = 0.0;
    GrpoMetrics m1, m2;
    const Vec a = grpo_gradient(f.groups, f.old_params, f.old_params, f.old_params, plain, m1);
    const Vec b = grpo_gradient(f.groups, f.old_params, f.old_params, f.old_params, tight, m2);
    CHECK(a.norm() > 0.0);
    CHECK(bit_equal(a, b));
    CHECK(m2.clip_fraction == 0.0);
  }

  TEST_CASE("clipped members contribute only through the KL term") {
    Fixture f;
    RLConfig cfg;
    cfg.beta = 0.0;
    cfg.clip_eps = 1e-9;
    const Vec params = f.near(0.05, 6);
    GrpoMetrics m;
    const Vec g = grpo_gradient(f.groups, params, f.old_params, f.old_params, cfg, m);
    CHECK(m.clip_fraction > 0.0);
    if (m.clip_fraction == 1.0) CHECK(g.norm() == 0.0);
  }

  TEST_CASE("zero advantages without KL leave parameters unchanged") {
    Fixture f(4, true);
    RLConfig cfg;
    cfg.beta = 0.0;
    Vec params = f.old_params;
    OptimizerState st;
    const GrpoMetrics m = grpo_update(f.groups, params, f.old_params, f.old_params, cfg, OptimizerConfig{}, st);
    CHECK(m.advantage_abs_mean == 0.0);
    CHECK(bit_equal(params, f.old_params));
  }

  TEST_CASE("mismatched groups are rejected") {
    Fixture f;
    f.groups[0].advantages.pop_back();
    GrpoMetrics m;
    CHECK_THROWS_AS(grpo_gradient(f.groups, f.old_params, f.old_params, f.old_params, RLConfig{}, m), DataError);
  }
}

TEST_SUITE("rewards") {
  TEST_CASE("aesthetic normalisation") {
    CHECK(normalize_aesthetic({6.0, 7.0}, 1.0, 10.0) == doctest::Approx(5.5 / 9.0));
    CHECK(normalize_aesthetic({1.0, 1.0}, 1.0, 10.0) == 0.0);
    CHECK(normalize_aesthetic({12.0, 11.0}, 1.0, 10.0) == 1.0);
    CHECK_THROWS_AS(normalize_aesthetic({1.0, 1.0}, 2.0, 2.0), ConfigError);
  }

  TEST_CASE("error rates") {
    CHECK(tokenize("  the  cat sat ", TokenLevel::kWord) == std::vector<std::string>{"the", "cat", "sat"});
    CHECK(tokenize("你 好a", TokenLevel::kChar) == std::vector<std::string>{"你", "好", "a"});
    CHECK(error_rate("a b c d", "a x c d", TokenLevel::kWord) == 0.25);
    CHECK(error_rate("a b", "a b c d", TokenLevel::kWord) == 1.0);
    CHECK(error_rate("abc", "abd", TokenLevel::kChar) == doctest::Approx(1.0 / 3.0));
    CHECK(error_rate("", "", TokenLevel::kWord) == 0.0);
    CHECK(error_rate("", "x", TokenLevel::kWord) == 1.0);
  }

  TEST_CASE("intelligibility reward") {
    const Waveform w = two_samples(1, 0);
    CHECK(reward_intelligibility(w, "a b c d", FixedTranscriber("a x c d")) == 0.75);
    CHECK(reward_intelligibility(w, "a b c d", FixedTranscriber("")) == 0.0);
    CHECK(reward_intelligibility(w, "a b", FixedTranscriber("q r s t u")) == 0.0);
  }

  TEST_CASE("speaker reward maps cosine into [0, 1]") {
    const SampleEmbedder e;
    CHECK(reward_speaker(two_samples(1, 0), two_samples(-2, 0), e) == 0.0);
    CHECK(reward_speaker(two_samples(1, 0), two_samples(0, 3), e) == doctest::Approx(0.5));
    CHECK(reward_speaker(two_samples(1, 1), two_samples(2, 2), e) == doctest::Approx(1.0));
    CHECK_THROWS_AS(cosine_similarity(Vec::Zero(2), Vec::Ones(2)), DataError);
  }

  TEST_CASE("aggregation") {
    const std::vector<double> a{0.5, 1.0}, i{0.25, 0.0}, s{0.75, 0.5};
    const auto r = aggregate_rewards(a, i, s, RewardWeights{});
    CHECK(r[0].total == 1.5);
    CHECK(r[1].total == 1.5);
    const auto w = aggregate_rewards(a, i, s, RewardWeights{2.0, 0.0, 1.0});
    CHECK(w[0].total == 1.75);
    const std::vector<double> short_list{1.0};
    CHECK_THROWS_AS(aggregate_rewards(a, short_list, s, RewardWeights{}), DataError);
  }

  TEST_CASE("tonality stand-in prefers tones over noise") {
    const TonalityScorer scorer;
    const double tone = reward_aesthetic(sine(440.0, 0.5, 8000), scorer);
    const double noise = reward_aesthetic(white_noise(0.5, 8000, 3), scorer);
    CHECK(tone > noise + 0.3);
    CHECK(tone <= 1.0);
    CHECK(noise >= 0.0);
  }

  TEST_CASE("content intelligibility") {
    Rng rng(3);
    const Mat a = random_mat(10, 4, rng);
    CHECK(content_intelligibility(a, a) == 1.0);
    CHECK(content_intelligibility(a + Mat::Constant(10, 4, 1.0), a) == doctest::Approx(0.5));
    CHECK_THROWS_AS(content_intelligibility(Mat::Zero(3, 2), a), DataError);
  }
}
