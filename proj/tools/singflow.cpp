// SPDX-License-Identifier: Apache-2.0
//
// singflow: train / convert / eval / make-toy-corpus / print-config.
// Exit codes: 0 ok, 1 usage or config, 2 data, 3 plugin.

#include "singflow/config.hpp"
#include "singflow/corpus.hpp"
#include "singflow/metrics.hpp"
#include "singflow/pipeline.hpp"
#include "singflow/plugins.hpp"
#include "singflow/stages.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace singflow;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "run config (JSON); defaults when omitted");
  cmd->add_option("--seed", c.seed, "overrides the config seed");
}

// Config file, then SINGFLOW_* environment, then flags. A relative corpus path
// in the file is taken relative to the file.
RunConfig effective_config(const Common& c, const std::string& corpus_flag) {
  RunConfig cfg = load_run_config(c.config);
  if (!c.config.empty() && !cfg.corpus.empty() && fs::path(cfg.corpus).is_relative()) {
    cfg.corpus = (fs::path(c.config).parent_path() / cfg.corpus).lexically_normal().string();
  }
  if (!corpus_flag.empty()) cfg.corpus = corpus_flag;
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

int run(int argc, char** argv) {
  CLI::App app{"singflow: flow-matching singing voice conversion"};
  app.require_subcommand(1);

  Common train_common;
  std::string stage = "cpt";
  std::string train_ckpt;
  std::string train_out;
  std::string train_corpus;
  bool resume = false;
  bool quiet = false;
  auto* train = app.add_subcommand("train", "run one training stage");
  add_common(train, train_common);
  train->add_option("--stage", stage, "cpt, sft or rl")->check(CLI::IsMember({"cpt", "sft", "rl"}));
  train->add_option("--checkpoint", train_ckpt, "input checkpoint (required for sft and rl)");
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--corpus", train_corpus, "corpus root (overrides the config)");
  train->add_flag("--resume", resume, "continue from <out>/<stage>.ckpt");
  train->add_flag("--quiet", quiet, "do not echo metrics to stderr");

  Common conv_common;
  std::string conv_ckpt, conv_in, conv_ref, conv_out;
  ConvertOptions conv_opts;
  double gamma = 1.0;
  auto* convert_cmd = app.add_subcommand("convert", "convert a song or vocal toward a reference timbre");
  add_common(convert_cmd, conv_common);
  convert_cmd->add_option("--checkpoint", conv_ckpt, "trained checkpoint")->required();
  convert_cmd->add_option("--input", conv_in, "song or vocal WAV")->required();
  convert_cmd->add_option("--ref", conv_ref, "target-timbre reference WAV")->required();
  convert_cmd->add_option("--out", conv_out, "output WAV")->required();
  convert_cmd->add_flag("--vocal-only", conv_opts.vocal_only, "input is already a clean vocal");
  convert_cmd->add_option("--transpose", conv_opts.transpose, "semitones applied to the source F0");
  auto* gamma_opt = convert_cmd->add_option("--gamma-inst", gamma, "instrumental gain for recomposition");

  Common eval_common;
  std::string manifest, converted, report, eval_ckpt;
  auto* eval = app.add_subcommand("eval", "score converted audio against a manifest");
  add_common(eval, eval_common);
  eval->add_option("--manifest", manifest, "TSV with id, src, ref, conv[, text]")->required();
  eval->add_option("--converted", converted, "directory holding the conv files")->required();
  eval->add_option("--report", report, "JSONL report path")->required();
  eval->add_option("--checkpoint", eval_ckpt, "take feature settings from this checkpoint");

  std::string toy_out;
  ToyCorpusConfig toy;
  auto* make_toy = app.add_subcommand("make-toy-corpus", "write the synthetic toy corpus");
  make_toy->add_option("--out", toy_out, "corpus root")->required();
  make_toy->add_option("--clips", toy.clips, "number of clips");
  make_toy->add_option("--sample-rate", toy.sample_rate, "sample rate in Hz");
  make_toy->add_option("--seed", toy.seed, "generator seed");

  Common print_common;
  bool toy_defaults = false;
  auto* print = app.add_subcommand("print-config", "print the effective config as JSON");
  add_common(print, print_common);
  print->add_flag("--toy", toy_defaults, "print the toy-corpus preset instead of the defaults");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  if (*train) {
    TrainRequest req;
    req.stage = parse_stage(stage);
    req.config = effective_config(train_common, train_corpus);
    req.init_checkpoint = train_ckpt;
    req.out_dir = train_out;
    req.resume = resume;
    LogSink log;
    if (!quiet) log = [](const std::string& line) { std::cerr << line << '\n'; };
    const TrainOutcome r = run_training(req, log);
    std::cout << "wrote " << r.checkpoint.string() << " (" << r.steps_run << " steps)\n";
  } else if (*convert_cmd) {
    if (gamma_opt->count() > 0) conv_opts.gamma_inst = gamma;
    const RunConfig cfg = effective_config(conv_common, "");
    const ConvertResult r = convert_files(conv_ckpt, cfg, conv_in, conv_ref, conv_out, conv_opts);
    std::cout << "wrote " << conv_out << " (" << r.output.size() << " samples)\n";
  } else if (*eval) {
    RunConfig cfg = effective_config(eval_common, "");
    if (!eval_ckpt.empty()) cfg = conversion_config(cfg, load_checkpoint(eval_ckpt));
    const FeaturePipeline features(cfg.features, MelNorm{}, nullptr);
    const EncoderEmbedder builtin(features.timbre_encoder());
    std::unique_ptr<TimbreEmbedder> embedder;
    std::unique_ptr<Transcriber> asr;
    std::unique_ptr<AestheticScorer> aesthetic;
    if (!cfg.plugins.embedder.empty()) embedder = std::make_unique<CommandEmbedder>(cfg.plugins.embedder);
    if (!cfg.plugins.asr.empty()) asr = std::make_unique<CommandTranscriber>(cfg.plugins.asr);
    if (!cfg.plugins.aesthetic.empty()) {
      aesthetic = std::make_unique<CommandAesthetic>(cfg.plugins.aesthetic, cfg.plugins.aesthetic_min,
                                                     cfg.plugins.aesthetic_max);
    }
    EvalOptions opts;
    opts.mel = cfg.features.mel;
    opts.f0 = cfg.features.f0;
    opts.embedder = embedder ? embedder.get() : &builtin;
    opts.transcriber = asr.get();
    opts.aesthetics = aesthetic.get();
    const EvalReport rep = evaluate(manifest, converted, opts);
    write_file_atomic(report, report_jsonl(rep));
    std::cout << report_table(rep);
  } else if (*make_toy) {
    make_toy_corpus(toy_out, toy);
    std::cout << "wrote " << toy.clips << " clips to " << toy_out << '\n';
  } else if (*print) {
    const RunConfig cfg = toy_defaults ? toy_run_config() : effective_config(print_common, "");
    std::cout << to_json(cfg).dump(2) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const PluginError& e) {
    std::cerr << "singflow: plugin error: " << e.what() << '\n';
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "singflow: config error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << "singflow: data error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "singflow: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "singflow: error: " << e.what() << '\n';
    return 2;
  }
}
