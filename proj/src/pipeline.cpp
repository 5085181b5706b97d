// SPDX-License-Identifier: Apache-2.0
#include "singflow/pipeline.hpp"

#include "singflow/conditioning.hpp"
#include "singflow/sampler.hpp"
#include "singflow/stages.hpp"

namespace singflow {

namespace {

constexpr std::uint64_t kShiftTag = 0x7C01;
constexpr std::uint64_t kNoiseTag = 0x7C02;
constexpr std::uint64_t kVocoderTag = 0x7C03;

void require_rate(const Waveform& w, int sample_rate, const char* what) {
  if (w.sample_rate != sample_rate) {
    throw DataError(std::string(what) + " sample rate " + std::to_string(w.sample_rate) + " Hz does not match the model (" +
                    std::to_string(sample_rate) + " Hz)");
  }
}

Waveform fit_length(Waveform w, std::size_t n) {
  w.samples.resize(n, 0.0F);
  return w;
}

}  // namespace

RunConfig conversion_config(const RunConfig& user, const Checkpoint& ck) {
  return inherit_architecture(user, ck.config);
}

ConvertResult convert(const Checkpoint& ck, const RunConfig& cfg, const Waveform& input, const Waveform& reference,
                      const ConvertOptions& opts, const Separator* separator) {
  const int sr = cfg.features.mel.sample_rate;
  require_rate(input, sr, "input");
  require_rate(reference, sr, "reference");
  if (!opts.vocal_only && separator == nullptr) {
    throw PluginError("full-song input needs a separator plugin (or --vocal-only for a clean vocal)");
  }
  PassthroughSeparator passthrough;
  const Stems stems = opts.vocal_only ? passthrough.separate(input) : separator->separate(input);
  require_rate(stems.lead, sr, "separated lead");
  require_rate(stems.inst, sr, "separated instrumental");

  Engine engine(cfg, ck.norm, ck.channel_scales);
  const Policy& policy = engine.policy();
  if (ck.params.size() != policy.num_params()) throw DataError("checkpoint parameter count does not match its architecture");
  const FeaturePipeline& features = engine.features();

  const CondInputs src = conversion_inputs(features, stems.lead, reference, cfg.infer.shift_content,
                                           derive_seed(cfg.seed, kShiftTag), opts.transpose);
  const Eigen::Index frames = src.frames();
  const Eigen::Index channels = cfg.features.mel.n_mels;

  // Optional prompt: the first reference frames are prepended as observed rows.
  Eigen::Index prompt = 0;
  Mat prompt_mel;
  CondInputs in = src;
  if (cfg.infer.prompt_frames > 0) {
    prompt_mel = features.mel(reference);
    prompt = std::min<Eigen::Index>(cfg.infer.prompt_frames, prompt_mel.rows());
    const Mat ref_f0 = features.f0_embedding(features.f0(reference), prompt_mel.rows());
    const Mat ref_content = features.content(prompt_mel, prompt_mel.rows());
    in.h_f0.resize(prompt + frames, src.h_f0.cols());
    in.h_f0 << ref_f0.topRows(prompt), src.h_f0;
    in.content.resize(prompt + frames, src.content.cols());
    in.content << ref_content.topRows(prompt), src.content;
  }

  const VelocityFn velocity = [&](const Mat& x, double t) {
    Mat v = policy.velocity(ck.params, in, x, t);
    v.topRows(prompt).setZero();
    return v;
  };
  Rng noise(derive_seed(cfg.seed, kNoiseTag));
  Mat x0 = standard_normal(prompt + frames, channels, noise);
  if (prompt > 0) x0.topRows(prompt) = prompt_mel.topRows(prompt);
  Rng unused(0);
  const Trajectory traj = sample_trajectory_from(velocity, x0, cfg.sampler, std::nullopt, unused);

  ConvertResult out;
  out.prompt_frames = prompt;
  out.mel = traj.final_state().bottomRows(frames);
  const MelSpectrogram m{features.norm().invert(out.mel), cfg.features.mel.hop, sr, cfg.features.mel.n_fft};
  out.vocal = fit_length(invert_mel(m, cfg.features.mel, cfg.infer.vocoder_iters, derive_seed(cfg.seed, kVocoderTag)),
                         stems.lead.size());
  if (opts.vocal_only) {
    out.output = out.vocal;
  } else {
    const double gamma = opts.gamma_inst.value_or(cfg.infer.gamma_inst);
    out.output = mix_tracks(out.vocal, stems.inst, gamma);
  }
  return out;
}

ConvertResult convert_files(const std::filesystem::path& checkpoint, const RunConfig& user,
                            const std::filesystem::path& input, const std::filesystem::path& reference,
                            const std::filesystem::path& output, const ConvertOptions& opts) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const RunConfig cfg = conversion_config(user, ck);
  const Waveform in = load_wav(input);
  const Waveform ref = load_wav(reference);
  std::unique_ptr<Separator> separator;
  if (!opts.vocal_only && !cfg.plugins.separator.empty()) {
    separator = std::make_unique<CommandSeparator>(cfg.plugins.separator);
  }
  ConvertResult r = convert(ck, cfg, in, ref, opts, separator.get());

  if (output.has_parent_path()) std::filesystem::create_directories(output.parent_path());
  std::filesystem::path partial = output;
  partial += ".partial";
  try {
    save_wav(r.output, partial, WavEncoding::kFloat32);
    std::filesystem::rename(partial, output);
  } catch (...) {
    std::error_code ec;
    std::filesystem::remove(partial, ec);
    throw;
  }
  return r;
}

}  // namespace singflow
