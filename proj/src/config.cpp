// SPDX-License-Identifier: Apache-2.0
#include "singflow/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

extern char** environ;

namespace singflow {

namespace {

const Json& empty_object() {
  static const Json kEmpty = Json::object();
  return kEmpty;
}

// Strict reader over one JSON object: every key must be consumed.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config: '" + path_ + "' must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config: '" + name(key) + "' has the wrong type");
    }
  }

  void get_optional(const char* key, std::optional<double>& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    if (it->is_null()) {
      out.reset();
    } else if (it->is_number()) {
      out = it->get<double>();
    } else {
      throw ConfigError("config: '" + name(key) + "' must be a number or null");
    }
  }

  Section sub(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return Section(it == j_.end() ? empty_object() : *it, name(key));
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("config: unknown key '" + name(item.key()) + "'");
    }
  }

 private:
  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_mel(Section s, MelConfig& m) {
  s.get("sample_rate", m.sample_rate);
  s.get("n_fft", m.n_fft);
  s.get("hop", m.hop);
  s.get("n_mels", m.n_mels);
  s.get("f_min", m.f_min);
  s.get("f_max", m.f_max);
  s.get("log_floor", m.log_floor);
  s.finish();
}

Json write_mel(const MelConfig& m) {
  return Json{{"sample_rate", m.sample_rate}, {"n_fft", m.n_fft}, {"hop", m.hop}, {"n_mels", m.n_mels},
              {"f_min", m.f_min}, {"f_max", m.f_max}, {"log_floor", m.log_floor}};
}

void read_stage(Section& s, StageConfig& st) {
  s.get("steps", st.steps);
  s.get("batch_size", st.batch_size);
  s.get("checkpoint_every", st.checkpoint_every);
  s.get("log_every", st.log_every);
}

Json write_stage(const StageConfig& st) {
  return Json{{"steps", st.steps}, {"batch_size", st.batch_size}, {"checkpoint_every", st.checkpoint_every},
              {"log_every", st.log_every}};
}

void read_perturb(Section s, PerturbConfig& p) {
  s.get("p_jitter", p.p_jitter);
  s.get("p_glide", p.p_glide);
  s.get("p_jump", p.p_jump);
  s.get("segments_min", p.segments_min);
  s.get("segments_max", p.segments_max);
  s.get("jitter_sigma", p.jitter_sigma);
  s.get("glide_len", p.glide_len);
  s.get("glide_range", p.glide_range);
  s.get("jump_deltas", p.jump_deltas);
  s.get("f_min", p.f_min);
  s.get("f_max", p.f_max);
  s.finish();
}

Json write_perturb(const PerturbConfig& p) {
  return Json{{"p_jitter", p.p_jitter},         {"p_glide", p.p_glide},         {"p_jump", p.p_jump},
              {"segments_min", p.segments_min}, {"segments_max", p.segments_max}, {"jitter_sigma", p.jitter_sigma},
              {"glide_len", p.glide_len},       {"glide_range", p.glide_range}, {"jump_deltas", p.jump_deltas},
              {"f_min", p.f_min},               {"f_max", p.f_max}};
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

void RunConfig::validate() const {
  features.mel.validate();
  if (features.content_dim < 1 || features.timbre_dim < 1) throw ConfigError("features: dims must be positive");
  if (features.f0_embed.bins < 2) throw ConfigError("features: f0 bins must be >= 2");
  if (!(features.f0.f_min > 0.0 && features.f0.f_min < features.f0.f_max)) {
    throw ConfigError("features: need 0 < f0.f_min < f0.f_max");
  }
  if (features.f0.f_max > 0.5 * features.mel.sample_rate) throw ConfigError("features: f0.f_max above Nyquist");
  if (shifter.kind != "formant-warp" && shifter.kind != "identity" && shifter.kind != "command") {
    throw ConfigError("shifter: unknown kind '" + shifter.kind + "'");
  }
  if (shifter.kind == "command" && shifter.command.empty()) throw ConfigError("shifter: command kind needs a command");
  if (model.hidden < 1 || model.blocks < 0 || model.time_freqs < 1) throw ConfigError("model: invalid dimensions");
  if (adaptor.hidden < 0 || !(adaptor.alpha_tau >= 0.0)) throw ConfigError("adaptor: invalid settings");
  if (!(eb.lambda >= 0.0) || !(eb.ramp_start >= 0.0 && eb.ramp_start <= 1.0)) throw ConfigError("eb: invalid settings");
  for (const StageConfig* st : {&cpt, &sft}) {
    if (st->steps < 0 || st->batch_size < 1 || st->checkpoint_every < 1 || st->log_every < 1) {
      throw ConfigError("stage: steps >= 0, batch_size/checkpoint_every/log_every >= 1 required");
    }
  }
  if (!(optimizer.lr_peak >= 0.0) || !(optimizer.lr_floor >= 0.0)) throw ConfigError("optimizer: negative rate");
  sft_aug.validate();
  if (scale_examples < 1) throw ConfigError("scale_examples must be >= 1");
  sampler.validate();
  rl.validate();
  if (rl_vocoder_iters < 0 || infer.vocoder_iters < 0 || infer.prompt_frames < 0) {
    throw ConfigError("vocoder iterations and prompt frames must be >= 0");
  }
}

Json to_json(const RunConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["corpus"] = c.corpus;
  j["features"] = Json{{"mel", write_mel(c.features.mel)},
                       {"f0", {{"f_min", c.features.f0.f_min}, {"f_max", c.features.f0.f_max},
                               {"threshold", c.features.f0.threshold}}},
                       {"f0_embed", {{"f_min", c.features.f0_embed.f_min}, {"bins", c.features.f0_embed.bins}}},
                       {"content_dim", c.features.content_dim},
                       {"timbre_dim", c.features.timbre_dim},
                       {"encoder_seed", c.features.encoder_seed}};
  j["shifter"] = Json{{"kind", c.shifter.kind},
                      {"num_speakers", c.shifter.warp.num_speakers},
                      {"warp_min", c.shifter.warp.warp_min},
                      {"warp_max", c.shifter.warp.warp_max},
                      {"lifter_ms", c.shifter.warp.lifter_ms},
                      {"command", c.shifter.command}};
  j["model"] = Json{{"hidden", c.model.hidden}, {"blocks", c.model.blocks}, {"time_freqs", c.model.time_freqs}};
  j["adaptor"] = Json{{"hidden", c.adaptor.hidden}, {"alpha_tau", c.adaptor.alpha_tau}};
  j["eb"] = Json{{"lambda", c.eb.lambda},
                 {"ramp_start", c.eb.ramp_start},
                 {"normalize_mean_one", c.eb.normalize_mean_one},
                 {"scale_mode", c.eb.scale_mode == ScaleMode::kStd ? "std" : "variance"}};
  j["optimizer"] = Json{{"kind", to_string(c.optimizer.kind)}, {"lr_peak", c.optimizer.lr_peak},
                        {"lr_floor", c.optimizer.lr_floor},     {"decay_steps", c.optimizer.decay_steps},
                        {"beta1", c.optimizer.beta1},           {"beta2", c.optimizer.beta2},
                        {"eps", c.optimizer.eps},               {"weight_decay", c.optimizer.weight_decay}};
  j["cpt"] = write_stage(c.cpt);
  Json sft = write_stage(c.sft);
  sft["contamination"] = c.sft_aug.contamination;
  sft["alpha_min"] = c.sft_aug.alpha_min;
  sft["alpha_max"] = c.sft_aug.alpha_max;
  sft["alpha_fixed"] = c.sft_aug.alpha_fixed ? Json(*c.sft_aug.alpha_fixed) : Json(nullptr);
  sft["perturb"] = write_perturb(c.sft_aug.perturb);
  j["sft"] = sft;
  j["scale_examples"] = c.scale_examples;
  j["sampler"] = Json{{"n_steps", c.sampler.n_steps},       {"t_min", c.sampler.t_min},
                      {"t_max", c.sampler.t_max},           {"noise_level", c.sampler.noise_level},
                      {"sde_step_min", c.sampler.sde_step_min}, {"sde_step_max", c.sampler.sde_step_max},
                      {"s_window", c.sampler.s_window}};
  j["rl"] = Json{{"group_size", c.rl.group_size},
                 {"prompts_per_step", c.rl.prompts_per_step},
                 {"beta", c.rl.beta},
                 {"lr", c.rl.lr},
                 {"iterations", c.rl.iterations},
                 {"clip_eps", c.rl.clip_eps},
                 {"clip", c.rl.clip},
                 {"weights", {{"aesthetic", c.rl.weights.aesthetic},
                              {"intelligibility", c.rl.weights.intelligibility},
                              {"speaker", c.rl.weights.speaker}}},
                 {"min_duration", c.rl.min_duration},
                 {"checkpoint_every", c.rl.checkpoint_every},
                 {"aux_flow_weight", c.rl.aux_flow_weight},
                 {"token_level", to_string(c.rl.token_level)},
                 {"vocoder_iters", c.rl_vocoder_iters}};
  j["infer"] = Json{{"prompt_frames", c.infer.prompt_frames},
                    {"shift_content", c.infer.shift_content},
                    {"vocoder_iters", c.infer.vocoder_iters},
                    {"gamma_inst", c.infer.gamma_inst}};
  j["plugins"] = Json{{"separator", c.plugins.separator},   {"aesthetic", c.plugins.aesthetic},
                      {"asr", c.plugins.asr},               {"embedder", c.plugins.embedder},
                      {"aesthetic_min", c.plugins.aesthetic_min}, {"aesthetic_max", c.plugins.aesthetic_max}};
  return j;
}

RunConfig run_config_from_json(const Json& j) {
  RunConfig c;
  Section root(j, "");
  root.get("seed", c.seed);
  root.get("corpus", c.corpus);
  {
    Section f = root.sub("features");
    read_mel(f.sub("mel"), c.features.mel);
    Section f0 = f.sub("f0");
    f0.get("f_min", c.features.f0.f_min);
    f0.get("f_max", c.features.f0.f_max);
    f0.get("threshold", c.features.f0.threshold);
    f0.finish();
    Section fe = f.sub("f0_embed");
    fe.get("f_min", c.features.f0_embed.f_min);
    fe.get("bins", c.features.f0_embed.bins);
    fe.finish();
    f.get("content_dim", c.features.content_dim);
    f.get("timbre_dim", c.features.timbre_dim);
    f.get("encoder_seed", c.features.encoder_seed);
    f.finish();
  }
  {
    Section s = root.sub("shifter");
    s.get("kind", c.shifter.kind);
    s.get("num_speakers", c.shifter.warp.num_speakers);
    s.get("warp_min", c.shifter.warp.warp_min);
    s.get("warp_max", c.shifter.warp.warp_max);
    s.get("lifter_ms", c.shifter.warp.lifter_ms);
    s.get("command", c.shifter.command);
    s.finish();
  }
  {
    Section s = root.sub("model");
    s.get("hidden", c.model.hidden);
    s.get("blocks", c.model.blocks);
    s.get("time_freqs", c.model.time_freqs);
    s.finish();
  }
  {
    Section s = root.sub("adaptor");
    s.get("hidden", c.adaptor.hidden);
    s.get("alpha_tau", c.adaptor.alpha_tau);
    s.finish();
  }
  {
    Section s = root.sub("eb");
    s.get("lambda", c.eb.lambda);
    s.get("ramp_start", c.eb.ramp_start);
    s.get("normalize_mean_one", c.eb.normalize_mean_one);
    std::string mode = c.eb.scale_mode == ScaleMode::kStd ? "std" : "variance";
    s.get("scale_mode", mode);
    if (mode == "std") {
      c.eb.scale_mode = ScaleMode::kStd;
    } else if (mode == "variance") {
      c.eb.scale_mode = ScaleMode::kVariance;
    } else {
      throw ConfigError("config: eb.scale_mode must be 'std' or 'variance'");
    }
    s.finish();
  }
  {
    Section s = root.sub("optimizer");
    std::string kind = to_string(c.optimizer.kind);
    s.get("kind", kind);
    c.optimizer.kind = parse_optimizer_kind(kind);
    s.get("lr_peak", c.optimizer.lr_peak);
    s.get("lr_floor", c.optimizer.lr_floor);
    s.get("decay_steps", c.optimizer.decay_steps);
    s.get("beta1", c.optimizer.beta1);
    s.get("beta2", c.optimizer.beta2);
    s.get("eps", c.optimizer.eps);
    s.get("weight_decay", c.optimizer.weight_decay);
    s.finish();
  }
  {
    Section s = root.sub("cpt");
    read_stage(s, c.cpt);
    s.finish();
  }
  {
    Section s = root.sub("sft");
    read_stage(s, c.sft);
    s.get("contamination", c.sft_aug.contamination);
    s.get("alpha_min", c.sft_aug.alpha_min);
    s.get("alpha_max", c.sft_aug.alpha_max);
    s.get_optional("alpha_fixed", c.sft_aug.alpha_fixed);
    read_perturb(s.sub("perturb"), c.sft_aug.perturb);
    s.finish();
  }
  root.get("scale_examples", c.scale_examples);
  {
    Section s = root.sub("sampler");
    s.get("n_steps", c.sampler.n_steps);
    s.get("t_min", c.sampler.t_min);
    s.get("t_max", c.sampler.t_max);
    s.get("noise_level", c.sampler.noise_level);
    s.get("sde_step_min", c.sampler.sde_step_min);
    s.get("sde_step_max", c.sampler.sde_step_max);
    s.get("s_window", c.sampler.s_window);
    s.finish();
  }
  {
    Section s = root.sub("rl");
    s.get("group_size", c.rl.group_size);
    s.get("prompts_per_step", c.rl.prompts_per_step);
    s.get("beta", c.rl.beta);
    s.get("lr", c.rl.lr);
    s.get("iterations", c.rl.iterations);
    s.get("clip_eps", c.rl.clip_eps);
    s.get("clip", c.rl.clip);
    Section w = s.sub("weights");
    w.get("aesthetic", c.rl.weights.aesthetic);
    w.get("intelligibility", c.rl.weights.intelligibility);
    w.get("speaker", c.rl.weights.speaker);
    w.finish();
    s.get("min_duration", c.rl.min_duration);
    s.get("checkpoint_every", c.rl.checkpoint_every);
    s.get("aux_flow_weight", c.rl.aux_flow_weight);
    std::string level = to_string(c.rl.token_level);
    s.get("token_level", level);
    c.rl.token_level = parse_token_level(level);
    s.get("vocoder_iters", c.rl_vocoder_iters);
    s.finish();
  }
  {
    Section s = root.sub("infer");
    s.get("prompt_frames", c.infer.prompt_frames);
    s.get("shift_content", c.infer.shift_content);
    s.get("vocoder_iters", c.infer.vocoder_iters);
    s.get("gamma_inst", c.infer.gamma_inst);
    s.finish();
  }
  {
    Section s = root.sub("plugins");
    s.get("separator", c.plugins.separator);
    s.get("aesthetic", c.plugins.aesthetic);
    s.get("asr", c.plugins.asr);
    s.get("embedder", c.plugins.embedder);
    s.get("aesthetic_min", c.plugins.aesthetic_min);
    s.get("aesthetic_max", c.plugins.aesthetic_max);
    s.finish();
  }
  root.finish();
  c.validate();
  return c;
}

void apply_env_overrides(Json& j, const std::map<std::string, std::string>& env) {
  static const std::string kPrefix = "SINGFLOW_";
  for (const auto& [name, value] : env) {
    if (name.rfind(kPrefix, 0) != 0) continue;
    std::vector<std::string> path;
    std::string rest = name.substr(kPrefix.size());
    for (std::size_t pos; (pos = rest.find("__")) != std::string::npos;) {
      path.push_back(lower(rest.substr(0, pos)));
      rest = rest.substr(pos + 2);
    }
    path.push_back(lower(rest));
    Json* node = &j;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      if (!node->is_object()) throw ConfigError("config override " + name + ": path crosses a non-object");
      node = &(*node)[path[i]];
      if (node->is_null()) *node = Json::object();
    }
    if (!node->is_object()) throw ConfigError("config override " + name + ": path crosses a non-object");
    Json parsed = Json::parse(value, nullptr, false);
    (*node)[path.back()] = parsed.is_discarded() ? Json(value) : parsed;
  }
}

std::map<std::string, std::string> environment_overrides() {
  std::map<std::string, std::string> out;
  for (char** e = environ; e != nullptr && *e != nullptr; ++e) {
    const std::string kv(*e);
    const auto eq = kv.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = kv.substr(0, eq);
    if (key.rfind("SINGFLOW_", 0) == 0) out[key] = kv.substr(eq + 1);
  }
  return out;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  Json j = Json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    try {
      j = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
  }
  apply_env_overrides(j, environment_overrides());
  return run_config_from_json(j);
}

RunConfig toy_run_config() {
  RunConfig c;
  c.features.mel = reduced_mel_config();
  c.features.content_dim = 16;
  c.features.timbre_dim = 8;
  c.model.hidden = 48;
  c.model.blocks = 2;
  c.optimizer.lr_peak = 2e-3;
  c.optimizer.lr_floor = 2e-4;
  c.optimizer.decay_steps = 400;
  c.cpt = StageConfig{200, 8, 100, 1};
  c.sft = StageConfig{100, 8, 50, 1};
  c.scale_examples = 50;
  c.rl.iterations = 4;
  c.rl.group_size = 4;
  c.rl.prompts_per_step = 2;
  c.rl.min_duration = 0.5;
  c.rl.checkpoint_every = 2;
  c.rl_vocoder_iters = 4;
  c.infer.vocoder_iters = 16;
  return c;
}

}  // namespace singflow
