// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"
#include "helpers.hpp"

#include "singflow/checkpoint.hpp"
#include "singflow/config.hpp"
#include "singflow/corpus.hpp"
#include "singflow/metrics.hpp"
#include "singflow/plugins.hpp"

#include <fstream>
#include <sstream>

using namespace singflow;
using namespace singflow::testing;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("JSON round trip") {
    RunConfig c = toy_run_config();
    c.seed = 99;
    c.sft_aug.alpha_fixed = 0.3;
    c.plugins.asr = "asr {in}";
    const Json j = to_json(c);
    CHECK(to_json(run_config_from_json(j)) == j);
  }

  TEST_CASE("unknown keys and bad values are rejected") {
    Json j = to_json(RunConfig{});
    j["optimizer"]["momentum"] = 0.9;
    CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
    Json k = Json::object();
    k["cpt"] = {{"batch_size", 0}};
    CHECK_THROWS_AS(run_config_from_json(k).validate(), ConfigError);
    Json s = Json::object();
    s["seed"] = "seven";
    CHECK_THROWS_AS(run_config_from_json(s), ConfigError);
  }

  TEST_CASE("environment overrides") {
    Json j = Json::object();
    apply_env_overrides(j, {{"SINGFLOW_OPTIMIZER__LR_PEAK", "0.5"},
                            {"SINGFLOW_SEED", "12"},
                            {"SINGFLOW_PLUGINS__ASR", "my-asr {in}"},
                            {"OTHER", "1"}});
    const RunConfig c = run_config_from_json(j);
    CHECK(c.optimizer.lr_peak == 0.5);
    CHECK(c.seed == 12);
    CHECK(c.plugins.asr == "my-asr {in}");
    CHECK(c.optimizer.lr_floor == RunConfig{}.optimizer.lr_floor);
  }

  TEST_CASE("shipped toy config matches the preset") {
    const RunConfig c = load_run_config(SINGFLOW_TOY_CONFIG);
    CHECK(to_json(c) == to_json(toy_run_config()));
    CHECK_THROWS_AS(load_run_config("/nonexistent/config.json"), ConfigError);
  }
}

TEST_SUITE("checkpoint") {
  Checkpoint sample_checkpoint() {
    Checkpoint ck;
    ck.config = toy_run_config();
    ck.stage = "sft";
    ck.step = 42;
    ck.norm = MelNorm{-3.5, 2.25};
    Rng rng(1);
    ck.channel_scales = random_vec(4, rng).cwiseAbs();
    ck.params = random_vec(50, rng);
    ck.opt.first = random_vec(50, rng);
    ck.opt.second = random_vec(50, rng).cwiseAbs2();
    ck.opt.step = 17;
    return ck;
  }

  TEST_CASE("round trip is exact") {
    TempDir dir;
    const Checkpoint ck = sample_checkpoint();
    save_checkpoint(ck, dir.path() / "a.ckpt");
    const Checkpoint back = load_checkpoint(dir.path() / "a.ckpt");
    CHECK(back.stage == "sft");
    CHECK(back.step == 42);
    CHECK(back.norm.mean == ck.norm.mean);
    CHECK(back.norm.scale == ck.norm.scale);
    CHECK(bit_equal(back.channel_scales, ck.channel_scales));
    CHECK(bit_equal(back.params, ck.params));
    CHECK(bit_equal(back.opt.first, ck.opt.first));
    CHECK(bit_equal(back.opt.second, ck.opt.second));
    CHECK(back.opt.step == 17);
    CHECK(to_json(back.config) == to_json(ck.config));
    save_checkpoint(back, dir.path() / "b.ckpt");
    CHECK(slurp(dir.path() / "a.ckpt") == slurp(dir.path() / "b.ckpt"));
  }

  TEST_CASE("damaged files raise DataError") {
    TempDir dir;
    save_checkpoint(sample_checkpoint(), dir.path() / "a.ckpt");
    const std::string bytes = slurp(dir.path() / "a.ckpt");
    CHECK(bytes.substr(0, 6) == "SFCKPT");
    spit(dir.path() / "short.ckpt", bytes.substr(0, bytes.size() - 8));
    CHECK_THROWS_AS(load_checkpoint(dir.path() / "short.ckpt"), DataError);
    std::string bad = bytes;
    bad[0] = 'X';
    spit(dir.path() / "magic.ckpt", bad);
    CHECK_THROWS_AS(load_checkpoint(dir.path() / "magic.ckpt"), DataError);
    spit(dir.path() / "tiny.ckpt", "SF");
    CHECK_THROWS_AS(load_checkpoint(dir.path() / "tiny.ckpt"), DataError);
    CHECK_THROWS_AS(load_checkpoint(dir.path() / "missing.ckpt"), DataError);
  }

  TEST_CASE("atomic writes leave no temporary behind") {
    TempDir dir;
    write_file_atomic(dir.path() / "f.txt", "hello");
    write_file_atomic(dir.path() / "f.txt", "bye");
    CHECK(slurp(dir.path() / "f.txt") == "bye");
    CHECK(std::distance(fs::directory_iterator(dir.path()), fs::directory_iterator{}) == 1);
  }
}

TEST_SUITE("plugins") {
  TEST_CASE("placeholders are shell quoted") {
    CHECK(shell_quote("a'b") == "'a'\\''b'");
    const std::string nasty = "a b;$(echo hi)'\"";
    CHECK(run_command("printf %s {x}", {{"x", nasty}}) == nasty);
    CHECK(run_command("printf %s {unknown}", {}) == "{unknown}");
  }

  TEST_CASE("failing commands raise PluginError") {
    CHECK_THROWS_AS(run_command("exit 3", {}), PluginError);
    CHECK_THROWS_AS(CommandEmbedder("printf 'not json'").embed(sine(100, 0.1, 8000)), PluginError);
    CHECK_THROWS_AS(CommandEmbedder("printf '{\"embedding\":[]}'").embed(sine(100, 0.1, 8000)), PluginError);
    CHECK_THROWS_AS(CommandTranscriber("printf '{\"txt\":1}'").transcribe(sine(100, 0.1, 8000)), PluginError);
    CHECK_THROWS_AS(CommandSeparator("true").separate(sine(100, 0.1, 8000)), PluginError);
  }

  TEST_CASE("command adapters parse their outputs") {
    const Waveform w = sine(100, 0.1, 8000);
    const Vec e = CommandEmbedder("test -f {in} && printf '{\"embedding\":[1,2.5]}'").embed(w);
    CHECK(e.size() == 2);
    CHECK(e[1] == 2.5);
    CHECK(CommandTranscriber("printf '{\"text\":\"la la\"}'").transcribe(w) == "la la");
    const CommandAesthetic a("printf '{\"ce\":7,\"cu\":5}'", 1.0, 10.0);
    CHECK(reward_aesthetic(w, a) == doctest::Approx(5.0 / 9.0));
  }

  TEST_CASE("command separator and shifter exchange WAV files") {
    const Waveform w = sine(150, 0.2, 8000);
    const CommandSeparator sep("cp {in} {out_dir}/lead.wav && cp {in} {out_dir}/back.wav && cp {in} {out_dir}/inst.wav");
    const Stems s = sep.separate(w);
    CHECK(s.lead.samples == w.samples);
    CHECK(s.inst.samples == w.samples);
    const CommandShifter sh("test {speaker} = 3 && cp {in} {out}", 5);
    CHECK(sh.shift(w, 3).samples == w.samples);
    CHECK_THROWS_AS(sh.shift(w, 2), PluginError);
  }

  TEST_CASE("passthrough separator") {
    const Waveform w = sine(150, 0.1, 8000);
    const Stems s = PassthroughSeparator{}.separate(w);
    CHECK(s.lead.samples == w.samples);
    CHECK(s.inst.size() == w.size());
    for (float x : s.inst.samples) CHECK(x == 0.0F);
  }
}

TEST_SUITE("corpus") {
  TEST_CASE("toy corpus is deterministic and loadable") {
    TempDir a, b;
    ToyCorpusConfig cfg;
    cfg.clips = 4;
    make_toy_corpus(a.path(), cfg);
    make_toy_corpus(b.path(), cfg);
    const auto entries = read_corpus_manifest(a.path());
    REQUIRE(entries.size() == 4);
    for (const auto& e : entries) {
      CHECK(e.duration >= cfg.min_duration - 0.01);
      CHECK(e.duration <= cfg.max_duration + 0.01);
      CHECK(slurp(a.path() / (e.id + ".lead.wav")) == slurp(b.path() / (e.id + ".lead.wav")));
    }
    CHECK(entries[0].language != entries[1].language);
    const auto clips = load_corpus(a.path());
    REQUIRE(clips.size() == 4);
    CHECK(clips[0].harm.has_value());
    CHECK(clips[0].lead.sample_rate == 8000);
    CHECK(clips[0].lead.duration() == doctest::Approx(entries[0].duration).epsilon(0.01));
  }

  TEST_CASE("missing harmony is optional, bad manifests are not") {
    TempDir d;
    ToyCorpusConfig cfg;
    cfg.clips = 2;
    make_toy_corpus(d.path(), cfg);
    const auto entries = read_corpus_manifest(d.path());
    fs::remove(d.path() / (entries[1].id + ".harm.wav"));
    CHECK(!load_corpus(d.path())[1].harm.has_value());
    spit(d.path() / "manifest.tsv", "name\tlength\n");
    CHECK_THROWS_AS(read_corpus_manifest(d.path()), DataError);
    spit(d.path() / "manifest.tsv", "id\tduration\tlanguage\nx\tlong\ten\n");
    CHECK_THROWS_AS(read_corpus_manifest(d.path()), DataError);
    TempDir empty;
    CHECK_THROWS_AS(read_corpus_manifest(empty.path()), DataError);
  }
}

TEST_SUITE("metrics") {
  struct EvalDir {
    TempDir dir;
    RunConfig cfg = toy_run_config();
    TimbreEncoder encoder{cfg.features.mel, cfg.features.timbre_dim, cfg.features.encoder_seed};
    EncoderEmbedder embedder{encoder};

    EvalDir() {
      fs::create_directory(dir.path() / "conv");
      save_wav(synth_phrase({60, 64, 67}, 0.35, 1, 8000, 3), dir.path() / "a.wav");
      save_wav(synth_phrase({60, 64, 67}, 0.35, 1, 8000, 3), dir.path() / "conv" / "a.wav");
      spit(dir.path() / "eval.tsv", "id\tsrc\tref\tconv\na\ta.wav\ta.wav\ta.wav\nb\ta.wav\ta.wav\tmissing.wav\n");
    }

    EvalOptions options() const {
      EvalOptions o;
      o.mel = cfg.features.mel;
      o.f0 = cfg.features.f0;
      o.embedder = &embedder;
      return o;
    }
  };

  TEST_CASE("self-evaluation scores perfectly") {
    EvalDir e;
    const EvalReport r = evaluate(e.dir.path() / "eval.tsv", e.dir.path() / "conv", e.options());
    REQUIRE(r.rows.size() == 2);
    CHECK(r.rows[0].ok());
    CHECK(r.rows[0].spk_sim == doctest::Approx(1.0));
    CHECK(r.rows[0].logf0pcc == doctest::Approx(100.0));
    CHECK(!r.rows[0].cer.has_value());
    CHECK(!r.rows[1].ok());
    CHECK(r.scored() == 1);
    CHECK(r.mean_spk_sim() == doctest::Approx(1.0));
  }

  TEST_CASE("report is deterministic") {
    EvalDir e;
    const std::string a = report_jsonl(evaluate(e.dir.path() / "eval.tsv", e.dir.path() / "conv", e.options()));
    const std::string b = report_jsonl(evaluate(e.dir.path() / "eval.tsv", e.dir.path() / "conv", e.options()));
    CHECK(a == b);
    CHECK(std::count(a.begin(), a.end(), '\n') == 4);
    CHECK(a.find("\"type\":\"error\"") != std::string::npos);
  }

  TEST_CASE("missing inputs") {
    EvalDir e;
    CHECK_THROWS_AS(evaluate(e.dir.path() / "eval.tsv", e.dir.path() / "nope", e.options()), DataError);
    spit(e.dir.path() / "bad.tsv", "id\tsrc\n");
    CHECK_THROWS_AS(evaluate(e.dir.path() / "bad.tsv", e.dir.path() / "conv", e.options()), DataError);
    EvalOptions none = e.options();
    none.embedder = nullptr;
    CHECK_THROWS_AS(evaluate(e.dir.path() / "eval.tsv", e.dir.path() / "conv", none), PluginError);
  }

  TEST_CASE("log-f0 correlation ignores a constant transposition") {
    F0Contour a, b;
    for (int i = 0; i < 40; ++i) {
      const double f = 200.0 * std::exp2(std::sin(i * 0.3) / 3.0);
      a.f0_hz.push_back(f);
      b.f0_hz.push_back(f * 1.5);
      a.voiced.push_back(true);
      b.voiced.push_back(i % 7 != 0);
      if (!b.voiced.back()) b.f0_hz.back() = 0.0;
    }
    CHECK(logf0_pcc(a, b) == doctest::Approx(100.0));
  }
}
