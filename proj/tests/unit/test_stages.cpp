// SPDX-License-Identifier: Apache-2.0
//
// End-to-end stage behaviour on the generated toy corpus.
#include "doctest.h"
#include "helpers.hpp"

#include "singflow/checkpoint.hpp"
#include "singflow/config.hpp"
#include "singflow/corpus.hpp"
#include "singflow/engine.hpp"
#include "singflow/pipeline.hpp"
#include "singflow/plugins.hpp"
#include "singflow/stages.hpp"

#include "json.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

using namespace singflow;
using namespace singflow::testing;
namespace fs = std::filesystem;

namespace {

// Final CPT loss of the toy preset (seed 0, 200 steps) on the default toy corpus.
constexpr double kGoldenCptLoss = 10.575677882291263;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<double> losses(const fs::path& metrics) {
  std::vector<double> out;
  std::ifstream in(metrics);
  for (std::string line; std::getline(in, line);) out.push_back(nlohmann::json::parse(line)["loss"].get<double>());
  return out;
}

// One corpus and one full-length CPT run shared by every test here.
struct Shared {
  TempDir root;
  fs::path corpus = root.path() / "corpus";
  fs::path cpt_dir = root.path() / "cpt";
  TrainOutcome cpt;

  Shared() {
    make_toy_corpus(corpus, ToyCorpusConfig{});
    TrainRequest req;
    req.config = base_config();
    req.out_dir = cpt_dir;
    fs::create_directories(cpt_dir);
    cpt = run_training(req);
  }

  RunConfig base_config() const {
    RunConfig c = toy_run_config();
    c.corpus = corpus.string();
    return c;
  }

  static Shared& get() {
    static Shared s;
    return s;
  }
};

TrainOutcome train(const RunConfig& cfg, Stage stage, const fs::path& out, const fs::path& init = {},
                   bool resume = false) {
  fs::create_directories(out);
  TrainRequest req;
  req.stage = stage;
  req.config = cfg;
  req.out_dir = out;
  req.init_checkpoint = init;
  req.resume = resume;
  return run_training(req);
}

RunConfig short_config(int cpt_steps, int sft_steps) {
  RunConfig c = Shared::get().base_config();
  c.cpt.steps = cpt_steps;
  c.cpt.checkpoint_every = 2;
  c.sft.steps = sft_steps;
  c.sft.batch_size = c.cpt.batch_size;
  return c;
}

}  // namespace

TEST_SUITE("stages") {
  TEST_CASE("toy CPT reaches the recorded loss") {
    const Shared& s = Shared::get();
    const auto l = losses(s.cpt.metrics);
    REQUIRE(l.size() == 200);
    MESSAGE("final cpt loss " << std::setprecision(17) << l.back());
    CHECK(std::abs(l.back() - kGoldenCptLoss) <= 1e-6);
  }

  TEST_CASE("toy CPT loss halves") {
    const auto l = losses(Shared::get().cpt.metrics);
    REQUIRE(l.size() == 200);
    auto mean = [&](std::size_t from, std::size_t to) {
      double s = 0;
      for (std::size_t i = from; i < to; ++i) s += l[i];
      return s / static_cast<double>(to - from);
    };
    CHECK(mean(195, 200) <= 0.5 * mean(0, 5));
  }

  TEST_CASE("checkpoint records the stage and global step") {
    const Checkpoint ck = load_checkpoint(Shared::get().cpt.checkpoint);
    CHECK(ck.stage == "cpt");
    CHECK(ck.step == 200);
    CHECK(ck.opt.step == 200);
    CHECK(ck.channel_scales.size() == 16);
  }

  TEST_CASE("SFT without augmentation continues CPT exactly") {
    TempDir d;
    RunConfig c = short_config(4, 3);
    c.sft_aug.contamination = false;
    c.sft_aug.perturb.p_jitter = c.sft_aug.perturb.p_glide = c.sft_aug.perturb.p_jump = 0.0;
    const auto a = train(c, Stage::kCpt, d.path() / "a");
    const auto b = train(c, Stage::kSft, d.path() / "b", a.checkpoint);
    RunConfig longer = c;
    longer.cpt.steps = 7;
    const auto direct = train(longer, Stage::kCpt, d.path() / "c");
    const Checkpoint sft = load_checkpoint(b.checkpoint);
    const Checkpoint cpt = load_checkpoint(direct.checkpoint);
    CHECK(sft.opt.step == 7);
    CHECK(bit_equal(sft.params, cpt.params));
    CHECK(bit_equal(sft.opt.first, cpt.opt.first));
    CHECK(bit_equal(sft.opt.second, cpt.opt.second));
    CHECK(losses(b.metrics).back() == losses(direct.metrics).back());
  }

  TEST_CASE("resume equals an uninterrupted run") {
    TempDir d;
    const auto full = train(short_config(6, 0), Stage::kCpt, d.path() / "full");
    train(short_config(3, 0), Stage::kCpt, d.path() / "cut");
    const auto resumed = train(short_config(6, 0), Stage::kCpt, d.path() / "cut", {}, true);
    CHECK(resumed.steps_run == 3);
    CHECK(slurp(full.checkpoint) == slurp(resumed.checkpoint));
    CHECK(slurp(full.metrics) == slurp(resumed.metrics));
  }

  TEST_CASE("SFT needs a checkpoint") {
    TempDir d;
    CHECK_THROWS_AS(train(short_config(1, 1), Stage::kSft, d.path()), ConfigError);
  }

  TEST_CASE("zero RL iterations copy the input checkpoint") {
    TempDir d;
    RunConfig c = short_config(2, 0);
    c.rl.iterations = 0;
    const auto a = train(c, Stage::kCpt, d.path() / "a");
    const auto r = train(c, Stage::kRl, d.path() / "rl", a.checkpoint);
    CHECK(slurp(r.checkpoint) == slurp(a.checkpoint));
    CHECK(slurp(r.metrics).empty());
  }

  TEST_CASE("RL iterations log rewards and keep the architecture") {
    TempDir d;
    RunConfig c = short_config(2, 0);
    c.rl.iterations = 2;
    const auto a = train(c, Stage::kCpt, d.path() / "a");
    const auto r = train(c, Stage::kRl, d.path() / "rl", a.checkpoint);
    const Checkpoint ck = load_checkpoint(r.checkpoint);
    CHECK(ck.stage == "rl");
    CHECK(ck.step == 2);
    CHECK(ck.params.size() == load_checkpoint(a.checkpoint).params.size());
    std::ifstream in(r.metrics);
    int lines = 0;
    for (std::string line; std::getline(in, line); ++lines) {
      const auto j = nlohmann::json::parse(line);
      CHECK(j.contains("reward_total"));
    }
    CHECK(lines == 2);
  }

  TEST_CASE("mismatched sample rates are data errors") {
    std::vector<Clip> clips(1);
    clips[0].lead = sine(200, 0.1, 16000);
    CHECK_THROWS_AS(check_sample_rates(clips, 8000), DataError);
  }
}

TEST_SUITE("pipeline") {
  TEST_CASE("transpose moves voiced F0 buckets by the interval") {
    const RunConfig c = Shared::get().base_config();
    const FeaturePipeline fp(c.features, MelNorm{}, nullptr);
    const Waveform src = synth_phrase({57, 60, 62}, 0.4, 1, 8000, 5);
    const Waveform ref = synth_phrase({60, 64}, 0.4, 3, 8000, 6);
    const CondInputs base = conversion_inputs(fp, src, ref, false, 1, 0.0);
    const CondInputs up = conversion_inputs(fp, src, ref, false, 1, 12.0);
    REQUIRE(base.h_f0.rows() == up.h_f0.rows());
    int voiced = 0;
    const int unvoiced = c.features.f0_embed.bins;
    for (Eigen::Index i = 0; i < base.h_f0.rows(); ++i) {
      Eigen::Index b = 0, u = 0;
      base.h_f0.row(i).maxCoeff(&b);
      up.h_f0.row(i).maxCoeff(&u);
      if (b == unvoiced) {
        CHECK(u == unvoiced);
      } else {
        ++voiced;
        CHECK(u - b == 12);
      }
    }
    CHECK(voiced > base.h_f0.rows() / 2);
  }

  TEST_CASE("vocal conversion writes a full-length float WAV") {
    TempDir d;
    const Shared& s = Shared::get();
    const fs::path in = s.corpus / "toy000.lead.wav";
    const fs::path ref = s.corpus / "toy003.lead.wav";
    ConvertOptions opts;
    opts.vocal_only = true;
    const ConvertResult r = convert_files(s.cpt.checkpoint, s.base_config(), in, ref, d.path() / "o.wav", opts);
    const Waveform out = load_wav(d.path() / "o.wav");
    CHECK(out.size() == load_wav(in).size());
    CHECK(out.samples == r.output.samples);
    CHECK(!fs::exists(d.path() / "o.wav.partial"));
    bool finite = true;
    for (float x : out.samples) finite = finite && std::isfinite(x);
    CHECK(finite);
  }

  TEST_CASE("failed conversions leave nothing behind") {
    TempDir d;
    const Shared& s = Shared::get();
    const fs::path in = s.corpus / "toy000.lead.wav";
    const fs::path out = d.path() / "o.wav";
    CHECK_THROWS_AS(convert_files(s.cpt.checkpoint, s.base_config(), in, in, out, ConvertOptions{}), PluginError);
    RunConfig broken = s.base_config();
    broken.plugins.separator = "exit 1";
    CHECK_THROWS_AS(convert_files(s.cpt.checkpoint, broken, in, in, out, ConvertOptions{}), PluginError);
    CHECK_THROWS_AS(convert_files(d.path() / "none.ckpt", broken, in, in, out, ConvertOptions{}), DataError);
    CHECK(!fs::exists(out));
    CHECK(!fs::exists(d.path() / "o.wav.partial"));
  }
}
