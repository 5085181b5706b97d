// SPDX-License-Identifier: Apache-2.0
#include "singflow/rewards.hpp"

#include "singflow/fft.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

namespace singflow {

double normalize_aesthetic(const AestheticScore& s, double lo, double hi) {
  if (!(hi > lo)) throw ConfigError("aesthetic scorer declares an empty range");
  const double raw = 0.5 * (s.content_enjoyment + s.content_usefulness);
  return std::clamp((raw - lo) / (hi - lo), 0.0, 1.0);
}

double reward_aesthetic(const Waveform& w, const AestheticScorer& scorer) {
  return normalize_aesthetic(scorer.score(w), scorer.range_min(), scorer.range_max());
}

TokenLevel parse_token_level(const std::string& s) {
  if (s == "word") return TokenLevel::kWord;
  if (s == "char") return TokenLevel::kChar;
  throw ConfigError("unknown token level: " + s);
}

std::string to_string(TokenLevel level) { return level == TokenLevel::kWord ? "word" : "char"; }

std::vector<std::string> tokenize(const std::string& text, TokenLevel level) {
  std::vector<std::string> out;
  auto is_space = [](unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  if (level == TokenLevel::kWord) {
    std::string cur;
    for (char ch : text) {
      if (is_space(static_cast<unsigned char>(ch))) {
        if (!cur.empty()) out.push_back(std::move(cur));
        cur.clear();
      } else {
        cur.push_back(ch);
      }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
  }
  for (std::size_t i = 0; i < text.size();) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (c >= 0xF0) {
      len = 4;
    } else if (c >= 0xE0) {
      len = 3;
    } else if (c >= 0xC0) {
      len = 2;
    }
    len = std::min(len, text.size() - i);
    if (!is_space(c)) out.push_back(text.substr(i, len));
    i += len;
  }
  return out;
}

std::size_t edit_distance(std::span<const std::string> ref, std::span<const std::string> hyp) {
  std::vector<std::size_t> prev(hyp.size() + 1);
  std::vector<std::size_t> cur(hyp.size() + 1);
  for (std::size_t j = 0; j <= hyp.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= ref.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= hyp.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[hyp.size()];
}

double error_rate(const std::string& ref, const std::string& hyp, TokenLevel level) {
  const auto r = tokenize(ref, level);
  const auto h = tokenize(hyp, level);
  if (r.empty()) return h.empty() ? 0.0 : 1.0;
  return static_cast<double>(edit_distance(r, h)) / static_cast<double>(r.size());
}

double reward_intelligibility(const Waveform& w, const std::string& ref_text, const Transcriber& asr,
                              TokenLevel level) {
  return 1.0 - std::min(1.0, error_rate(ref_text, asr.transcribe(w), level));
}

double cosine_similarity(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw DataError("cosine: embedding sizes differ");
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw DataError("cosine: degenerate zero embedding");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

double reward_speaker(const Waveform& gen, const Waveform& ref, const TimbreEmbedder& embedder) {
  return 0.5 * (1.0 + cosine_similarity(embedder.embed(gen), embedder.embed(ref)));
}

std::vector<RewardVector> aggregate_rewards(std::span<const double> aesthetic, std::span<const double> intelligibility,
                                            std::span<const double> speaker, const RewardWeights& w) {
  if (aesthetic.size() != intelligibility.size() || aesthetic.size() != speaker.size()) {
    throw DataError("aggregate_rewards: component lists differ in length");
  }
  std::vector<RewardVector> out(aesthetic.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    RewardVector& r = out[i];
    r.aesthetic = aesthetic[i];
    r.intelligibility = intelligibility[i];
    r.speaker = speaker[i];
    r.total = w.aesthetic * r.aesthetic + w.intelligibility * r.intelligibility + w.speaker * r.speaker;
  }
  return out;
}

double spectral_flatness(const Waveform& w, int n_fft) {
  if (w.empty()) throw DataError("spectral flatness: empty waveform");
  const auto x = to_double(w);
  const int hop = n_fft / 2;
  const std::size_t frames = frame_count(x.size(), hop);
  const ComplexFrames spec = stft(x, n_fft, hop, frames);
  const Vec power = spec.cwiseAbs2().colwise().mean().transpose();
  const double floor = 1e-12;
  const double log_mean = (power.array() + floor).log().mean();
  const double mean = power.mean() + floor;
  return std::clamp(std::exp(log_mean) / mean, 0.0, 1.0);
}

AestheticScore TonalityScorer::score(const Waveform& w) const {
  const double s = 1.0 + 9.0 * (1.0 - spectral_flatness(w));
  return AestheticScore{s, s};
}

double content_intelligibility(const Mat& generated, const Mat& source) {
  if (generated.cols() != source.cols()) throw DataError("content intelligibility: feature widths differ");
  const Mat g = nn_interp(generated, source.rows());
  const double d = ((g - source).rowwise().norm().array() / std::sqrt(static_cast<double>(source.cols()))).mean();
  return 1.0 / (1.0 + d);
}

}  // namespace singflow
