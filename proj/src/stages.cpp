// SPDX-License-Identifier: Apache-2.0
#include "singflow/stages.hpp"

#include "singflow/corpus.hpp"
#include "singflow/grpo.hpp"
#include "singflow/plugins.hpp"
#include "singflow/trainer.hpp"

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

namespace singflow {

namespace {

constexpr std::uint64_t kScaleTag = 0x5C01;
constexpr std::uint64_t kInitTag = 0x5C02;
constexpr std::uint64_t kStepTag = 0x5C03;
constexpr std::uint64_t kPromptTag = 0x5C04;
constexpr std::uint64_t kVocoderTag = 0x5C05;
constexpr std::uint64_t kAuxTag = 0x5C06;

class MetricsLog {
 public:
  // Keeps only records whose `key` is at most `keep_upto` (resume) or starts
  // empty.
  MetricsLog(std::filesystem::path path, const char* key, std::optional<std::int64_t> keep_upto) : path_(std::move(path)) {
    if (keep_upto) {
      std::ifstream in(path_);
      std::string line;
      while (std::getline(in, line)) {
        const auto j = Json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains(key) || j[key].get<std::int64_t>() > *keep_upto) break;
        kept_ += line + "\n";
      }
    }
    write_file_atomic(path_, kept_);
    out_.open(path_, std::ios::binary | std::ios::app);
    if (!out_) throw DataError("cannot open metrics log " + path_.string());
  }

  void write(const Json& j) {
    out_ << j.dump() << '\n';
    out_.flush();
  }

 private:
  std::filesystem::path path_;
  std::string kept_;
  std::ofstream out_;
};

std::vector<const Clip*> pointers(const std::vector<Clip>& clips) {
  std::vector<const Clip*> out;
  for (const Clip& c : clips) out.push_back(&c);
  return out;
}

std::vector<Clip> load_stage_corpus(const RunConfig& cfg) {
  if (cfg.corpus.empty()) throw ConfigError("corpus path is not set");
  auto clips = load_corpus(cfg.corpus);
  check_sample_rates(clips, cfg.features.mel.sample_rate);
  return clips;
}

TrainOutcome run_flow_stage(const TrainRequest& req, const LogSink& log) {
  const Stage stage = req.stage;
  const auto ckpt_path = stage_checkpoint_path(req.out_dir, stage);
  const std::vector<Clip> clips = load_stage_corpus(req.config);

  Checkpoint ck;
  bool resumed = false;
  if (req.resume && std::filesystem::exists(ckpt_path)) {
    ck = load_checkpoint(ckpt_path);
    if (ck.stage != to_string(stage)) throw DataError(ckpt_path.string() + " holds a '" + ck.stage + "' checkpoint");
    resumed = true;
  } else if (!req.init_checkpoint.empty()) {
    ck = load_checkpoint(req.init_checkpoint);
    if (stage == Stage::kSft && ck.stage != "cpt" && ck.stage != "sft") {
      throw DataError("sft needs a cpt or sft checkpoint, got '" + ck.stage + "'");
    }
    ck.step = 0;
  } else if (stage == Stage::kSft) {
    throw ConfigError("sft needs --checkpoint with a cpt checkpoint");
  } else {
    ck = initial_checkpoint(req.config, clips);
  }
  const RunConfig cfg =
      ck.stage == "init" ? req.config : inherit_architecture(req.config, ck.config);
  ck.config = cfg;
  ck.stage = to_string(stage);

  Engine engine(cfg, ck.norm, ck.channel_scales);
  if (ck.params.size() != engine.policy().num_params()) {
    throw DataError("checkpoint parameter count does not match its architecture");
  }
  const StageConfig& sc = stage == Stage::kCpt ? cfg.cpt : cfg.sft;

  MetricsLog metrics(stage_metrics_path(req.out_dir, stage), "step",
                     resumed ? std::optional<std::int64_t>(ck.step) : std::nullopt);
  TrainState state{ck.params, ck.opt, ck.step};
  const auto all = pointers(clips);
  TrainOutcome outcome;
  outcome.checkpoint = ckpt_path;
  outcome.metrics = stage_metrics_path(req.out_dir, stage);

  auto save = [&] {
    ck.params = state.params;
    ck.opt = state.opt;
    ck.step = state.step;
    save_checkpoint(ck, ckpt_path);
  };

  if (state.step >= sc.steps) save();
  while (state.step < sc.steps) {
    const std::uint64_t step_seed = derive_seed(cfg.seed, kStepTag, static_cast<std::uint64_t>(state.opt.step));
    Rng pick(step_seed);
    std::vector<const Clip*> batch;
    for (int b = 0; b < sc.batch_size; ++b) {
      batch.push_back(all[static_cast<std::size_t>(pick.uniform_int(0, static_cast<std::int64_t>(all.size()) - 1))]);
    }
    const std::uint64_t example_seed = derive_seed(step_seed, 1);
    const StepResult r =
        stage == Stage::kCpt
            ? train_step_cpt(engine.features(), engine.policy(), state, batch, engine.eb(), cfg.optimizer, example_seed)
            : train_step_sft(engine.features(), engine.policy(), state, batch, cfg.sft_aug, engine.eb(),
                             cfg.optimizer, example_seed);
    ++outcome.steps_run;
    outcome.last_loss = r.loss;
    if (state.step % sc.log_every == 0 || state.step == sc.steps) {
      Json line{{"stage", to_string(stage)}, {"step", state.step}, {"global_step", state.opt.step},
                {"loss", r.loss},            {"lr", r.lr}};
      metrics.write(line);
      if (log) log(line.dump());
    }
    if (state.step % sc.checkpoint_every == 0 || state.step == sc.steps) save();
  }
  return outcome;
}

struct RLPromptSource {
  const Clip* source;
  const Clip* reference;
  Mat content;  // source content features, unshifted
  std::string ref_text;
};

TrainOutcome run_rl_stage(const TrainRequest& req, const LogSink& log) {
  const auto ckpt_path = stage_checkpoint_path(req.out_dir, Stage::kRl);
  const auto metrics_path = stage_metrics_path(req.out_dir, Stage::kRl);
  TrainOutcome outcome{ckpt_path, metrics_path, 0, 0.0};

  bool resumed = false;
  Checkpoint ck;
  if (req.resume && std::filesystem::exists(ckpt_path)) {
    ck = load_checkpoint(ckpt_path);
    if (ck.stage != "rl") throw DataError(ckpt_path.string() + " holds a '" + ck.stage + "' checkpoint");
    resumed = true;
  } else {
    if (req.init_checkpoint.empty()) throw ConfigError("rl needs --checkpoint with an sft checkpoint");
    if (req.config.rl.iterations == 0) {
      // Nothing to train: the output is the input, byte for byte.
      std::filesystem::create_directories(req.out_dir);
      std::ifstream in(req.init_checkpoint, std::ios::binary);
      if (!in) throw DataError("cannot open checkpoint: " + req.init_checkpoint.string());
      std::ostringstream bytes;
      bytes << in.rdbuf();
      load_checkpoint(req.init_checkpoint);
      write_file_atomic(ckpt_path, bytes.str());
      write_file_atomic(metrics_path, "");
      return outcome;
    }
    ck = load_checkpoint(req.init_checkpoint);
    ck.step = 0;
    ck.opt.reset(ck.params.size());
  }
  // The frozen reference is the checkpoint RL started from; on resume it is
  // the input checkpoint again.
  Vec ref_params = ck.params;
  if (resumed) {
    if (req.init_checkpoint.empty()) throw ConfigError("resuming rl needs the original --checkpoint as reference");
    ref_params = load_checkpoint(req.init_checkpoint).params;
  }

  const RunConfig cfg = inherit_architecture(req.config, ck.config);
  ck.config = cfg;
  ck.stage = "rl";
  Engine engine(cfg, ck.norm, ck.channel_scales);
  if (ck.params.size() != engine.policy().num_params() || ref_params.size() != ck.params.size()) {
    throw DataError("checkpoint parameter count does not match its architecture");
  }
  const FeaturePipeline& features = engine.features();
  const std::vector<Clip> clips = load_stage_corpus(cfg);

  std::vector<const Clip*> eligible;
  for (const Clip& c : clips) {
    if (c.lead.duration() >= cfg.rl.min_duration) eligible.push_back(&c);
  }
  if (eligible.empty()) throw DataError("rl: no clip reaches min_duration");

  std::unique_ptr<AestheticScorer> aesthetic;
  if (cfg.plugins.aesthetic.empty()) {
    aesthetic = std::make_unique<TonalityScorer>();
  } else {
    aesthetic = std::make_unique<CommandAesthetic>(cfg.plugins.aesthetic, cfg.plugins.aesthetic_min,
                                                   cfg.plugins.aesthetic_max);
  }
  std::unique_ptr<Transcriber> asr;
  if (!cfg.plugins.asr.empty()) asr = std::make_unique<CommandTranscriber>(cfg.plugins.asr);
  std::unique_ptr<TimbreEmbedder> embedder;
  if (cfg.plugins.embedder.empty()) {
    embedder = std::make_unique<EncoderEmbedder>(features.timbre_encoder());
  } else {
    embedder = std::make_unique<CommandEmbedder>(cfg.plugins.embedder);
  }

  std::vector<RLPromptSource> sources;
  std::vector<RLPrompt> prompts;
  for (std::size_t i = 0; i < eligible.size(); ++i) {
    const Clip& src = *eligible[i];
    const Clip& ref = *eligible[(i + 1) % eligible.size()];
    CondInputs in = conversion_inputs(features, src.lead, ref.lead, cfg.infer.shift_content,
                                      derive_seed(cfg.seed, kPromptTag, i));
    const Mat mel = features.mel(src.lead);
    RLPromptSource s{&src, &ref, features.content(mel, mel.rows()), {}};
    if (asr) s.ref_text = asr->transcribe(src.lead);
    sources.push_back(std::move(s));
    prompts.push_back(RLPrompt{src.id, bind_policy(engine.policy(), std::move(in)), mel.rows(), mel.cols()});
  }
  auto source_of = [&](const std::string& id) -> const RLPromptSource& {
    for (const auto& s : sources) {
      if (s.source->id == id) return s;
    }
    throw DataError("rl: unknown prompt " + id);
  };

  const RewardFn reward = [&](const RLPrompt& prompt,
                              std::span<const Mat> finals) -> std::optional<std::vector<RewardVector>> {
    const RLPromptSource& src = source_of(prompt.id);
    std::vector<double> aes, intel, spk;
    try {
      for (const Mat& x : finals) {
        MelSpectrogram m{features.norm().invert(x), cfg.features.mel.hop, cfg.features.mel.sample_rate,
                         cfg.features.mel.n_fft};
        const Waveform w = invert_mel(m, cfg.features.mel, cfg.rl_vocoder_iters, derive_seed(cfg.seed, kVocoderTag));
        aes.push_back(reward_aesthetic(w, *aesthetic));
        intel.push_back(asr ? reward_intelligibility(w, src.ref_text, *asr, cfg.rl.token_level)
                            : content_intelligibility(features.content(x, x.rows()), src.content));
        spk.push_back(reward_speaker(w, src.reference->lead, *embedder));
      }
    } catch (const PluginError&) {
      return std::nullopt;
    }
    return aggregate_rewards(aes, intel, spk, cfg.rl.weights);
  };

  RLLoopHooks hooks;
  if (cfg.rl.aux_flow_weight > 0.0) {
    const auto all = pointers(clips);
    hooks.extra_grad = [&, all](int it, const Vec& params) -> std::optional<Vec> {
      const std::uint64_t s = derive_seed(cfg.seed, kAuxTag, static_cast<std::uint64_t>(it));
      Rng pick(s);
      std::vector<const Clip*> batch;
      for (int b = 0; b < cfg.rl.prompts_per_step; ++b) {
        batch.push_back(all[static_cast<std::size_t>(pick.uniform_int(0, static_cast<std::int64_t>(all.size()) - 1))]);
      }
      const auto examples = sft_examples(features, batch, cfg.sft_aug, derive_seed(s, 1));
      BatchLoss bl = batch_flow_loss(engine.policy(), params, examples, engine.eb(), flow_draw_seed(derive_seed(s, 1)), true);
      return Vec(cfg.rl.aux_flow_weight * bl.grad);
    };
  }
  hooks.warn = [&](const std::string& msg) {
    if (log) log("warning: " + msg);
  };

  MetricsLog metrics(metrics_path, "iteration", resumed ? std::optional<std::int64_t>(ck.step) : std::nullopt);
  Vec params = ck.params;
  OptimizerState opt = ck.opt;
  hooks.on_iteration = [&](const RLIteration& rec, const Vec& p, const OptimizerState& st) {
    const GrpoMetrics& g = rec.metrics;
    Json line{{"stage", "rl"},
              {"iteration", rec.iteration + 1},
              {"prompts_used", rec.prompts_used},
              {"prompts_skipped", rec.prompts_skipped},
              {"reward_total", g.reward_total},
              {"reward_aesthetic", g.reward_aesthetic},
              {"reward_intelligibility", g.reward_intelligibility},
              {"reward_speaker", g.reward_speaker},
              {"ratio_mean", g.ratio_mean},
              {"clip_fraction", g.clip_fraction},
              {"kl", g.kl},
              {"advantage_abs_mean", g.advantage_abs_mean},
              {"objective", g.objective}};
    metrics.write(line);
    if (log) log(line.dump());
    ++outcome.steps_run;
    outcome.last_loss = g.reward_total;
    const int done = rec.iteration + 1;
    if (done % cfg.rl.checkpoint_every == 0 || done == cfg.rl.iterations) {
      ck.params = p;
      ck.opt = st;
      ck.step = done;
      save_checkpoint(ck, ckpt_path);
    }
  };
  if (ck.step >= cfg.rl.iterations) save_checkpoint(ck, ckpt_path);
  rl_train_loop(prompts, params, ref_params, cfg.rl, cfg.sampler, cfg.optimizer, opt, reward, cfg.seed,
                static_cast<int>(ck.step), hooks);
  return outcome;
}

}  // namespace

Stage parse_stage(const std::string& s) {
  if (s == "cpt") return Stage::kCpt;
  if (s == "sft") return Stage::kSft;
  if (s == "rl") return Stage::kRl;
  throw ConfigError("unknown stage '" + s + "' (expected cpt, sft or rl)");
}

std::string to_string(Stage s) {
  switch (s) {
    case Stage::kCpt:
      return "cpt";
    case Stage::kSft:
      return "sft";
    case Stage::kRl:
      return "rl";
  }
  return "?";
}

std::filesystem::path stage_checkpoint_path(const std::filesystem::path& out_dir, Stage s) {
  return out_dir / (to_string(s) + ".ckpt");
}

std::filesystem::path stage_metrics_path(const std::filesystem::path& out_dir, Stage s) {
  return out_dir / (to_string(s) + ".metrics.jsonl");
}

void check_sample_rates(const std::vector<Clip>& clips, int sample_rate) {
  for (const Clip& c : clips) {
    if (c.lead.sample_rate != sample_rate || (c.harm && c.harm->sample_rate != sample_rate)) {
      throw DataError(c.id + ": sample rate " + std::to_string(c.lead.sample_rate) + " does not match the mel config (" +
                      std::to_string(sample_rate) + ")");
    }
  }
}

Checkpoint initial_checkpoint(const RunConfig& cfg, const std::vector<Clip>& clips) {
  if (clips.empty()) throw DataError("empty corpus");
  const auto n = std::min<std::size_t>(clips.size(), static_cast<std::size_t>(cfg.scale_examples));
  std::vector<const Clip*> head;
  for (std::size_t i = 0; i < n; ++i) head.push_back(&clips[i]);

  Checkpoint ck;
  ck.config = cfg;
  Engine probe(cfg, MelNorm{}, Vec());
  std::vector<Mat> mels;
  for (const Clip* c : head) mels.push_back(probe.features().raw_mel(c->lead));
  ck.norm = estimate_mel_norm(mels);

  Engine engine(cfg, ck.norm, Vec());
  const auto examples = cpt_examples(engine.features(), head, derive_seed(cfg.seed, kScaleTag));
  ck.channel_scales = channel_scales_from(examples, derive_seed(cfg.seed, kScaleTag, 1), cfg.eb.scale_mode);
  ck.params = engine.policy().init_params(derive_seed(cfg.seed, kInitTag));
  return ck;
}

CondInputs conversion_inputs(const FeaturePipeline& features, const Waveform& source, const Waveform& reference,
                             bool shift_content, std::uint64_t shift_seed, double transpose) {
  const Mat mel = features.mel(source);
  const Eigen::Index frames = mel.rows();
  CondInputs in;
  in.e_global = features.timbre(reference);
  F0Contour contour = features.f0(source);
  if (transpose != 0.0) contour = transpose_f0(contour, transpose);
  in.h_f0 = features.f0_embedding(contour, frames);
  if (shift_content) {
    Rng rng(shift_seed);
    in.content = features.shifted_content(source, frames, rng);
  } else {
    in.content = features.content(mel, frames);
  }
  return in;
}

TrainOutcome run_training(const TrainRequest& req, const LogSink& log) {
  req.config.validate();
  if (req.out_dir.empty()) throw ConfigError("train: output directory is not set");
  std::filesystem::create_directories(req.out_dir);
  return req.stage == Stage::kRl ? run_rl_stage(req, log) : run_flow_stage(req, log);
}

}  // namespace singflow
