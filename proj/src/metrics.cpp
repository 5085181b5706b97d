// SPDX-License-Identifier: Apache-2.0
#include "singflow/metrics.hpp"

#include "singflow/encoders.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace singflow {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == '\t') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string fmt(double v, int prec) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

}  // namespace

double logf0_pcc(const F0Contour& a, const F0Contour& b) {
  if (a.size() == 0 || b.size() == 0) throw DataError("logf0_pcc: empty contour");
  // Resample b's frames onto a's grid through the frame-index map.
  Mat idx(static_cast<Eigen::Index>(b.size()), 1);
  for (std::size_t i = 0; i < b.size(); ++i) idx(static_cast<Eigen::Index>(i), 0) = static_cast<double>(i);
  const Mat map = nn_interp(idx, static_cast<Eigen::Index>(a.size()));

  std::vector<double> xa;
  std::vector<double> xb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto j = static_cast<std::size_t>(map(static_cast<Eigen::Index>(i), 0));
    if (a.voiced[i] && b.voiced[j] && a.f0_hz[i] > 0.0 && b.f0_hz[j] > 0.0) {
      xa.push_back(std::log(a.f0_hz[i]));
      xb.push_back(std::log(b.f0_hz[j]));
    }
  }
  if (xa.size() < 2) throw DataError("logf0_pcc: fewer than two co-voiced frames");
  const auto n = static_cast<double>(xa.size());
  double ma = 0.0;
  double mb = 0.0;
  for (std::size_t i = 0; i < xa.size(); ++i) {
    ma += xa[i];
    mb += xb[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < xa.size(); ++i) {
    sab += (xa[i] - ma) * (xb[i] - mb);
    saa += (xa[i] - ma) * (xa[i] - ma);
    sbb += (xb[i] - mb) * (xb[i] - mb);
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) throw DataError("logf0_pcc: constant contour, correlation undefined");
  return std::clamp(100.0 * sab / std::sqrt(saa * sbb), -100.0, 100.0);
}

double speaker_similarity(const Waveform& gen, const Waveform& ref, const TimbreEmbedder& embedder) {
  return cosine_similarity(embedder.embed(gen), embedder.embed(ref));
}

std::vector<ManifestRow> read_eval_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("manifest has no header: " + path.string());
  const auto header = split_tabs(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* required : {"id", "src", "ref", "conv"}) {
    if (!col.count(required)) throw DataError(std::string("manifest header lacks column '") + required + "'");
  }
  const auto base = path.parent_path();
  auto resolve = [&base](const std::string& p) {
    const std::filesystem::path fp(p);
    return fp.is_absolute() ? fp.string() : (base / fp).string();
  };
  std::vector<ManifestRow> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = split_tabs(line);
    auto get = [&](const std::string& name) -> std::string {
      auto it = col.find(name);
      return it != col.end() && it->second < f.size() ? f[it->second] : std::string();
    };
    ManifestRow r{get("id"), resolve(get("src")), resolve(get("ref")), get("conv"), get("text")};
    rows.push_back(std::move(r));
  }
  return rows;
}

std::size_t EvalReport::scored() const {
  std::size_t n = 0;
  for (const auto& r : rows) n += r.ok() ? 1 : 0;
  return n;
}

double EvalReport::mean_spk_sim() const {
  double s = 0.0;
  for (const auto& r : rows) s += r.ok() ? r.spk_sim : 0.0;
  return scored() > 0 ? s / static_cast<double>(scored()) : 0.0;
}

double EvalReport::mean_logf0pcc() const {
  double s = 0.0;
  for (const auto& r : rows) s += r.ok() ? r.logf0pcc : 0.0;
  return scored() > 0 ? s / static_cast<double>(scored()) : 0.0;
}

std::optional<double> EvalReport::mean_cer() const {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.ok() && r.cer) {
      s += *r.cer;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

std::optional<AestheticScore> EvalReport::mean_aesthetics() const {
  AestheticScore s;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.ok() && r.aesthetics) {
      s.content_enjoyment += r.aesthetics->content_enjoyment;
      s.content_usefulness += r.aesthetics->content_usefulness;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  s.content_enjoyment /= static_cast<double>(n);
  s.content_usefulness /= static_cast<double>(n);
  return s;
}

EvalReport evaluate(const std::filesystem::path& manifest, const std::filesystem::path& converted_dir,
                    const EvalOptions& options) {
  if (!std::filesystem::is_directory(converted_dir)) {
    throw DataError("converted directory does not exist: " + converted_dir.string());
  }
  if (options.embedder == nullptr) throw PluginError("evaluate: no timbre embedder registered");
  EvalReport report;
  for (const ManifestRow& m : read_eval_manifest(manifest)) {
    EvalRow row;
    row.id = m.id;
    try {
      const Waveform src = load_wav(m.src);
      const Waveform ref = load_wav(m.ref);
      const Waveform conv = load_wav(converted_dir / m.conv);
      row.spk_sim = speaker_similarity(conv, ref, *options.embedder);
      const int hop = options.mel.hop;
      const F0Contour f_conv = extract_f0(conv, options.f0.f_min, options.f0.f_max, hop, options.f0.threshold);
      const F0Contour f_src = extract_f0(src, options.f0.f_min, options.f0.f_max, hop, options.f0.threshold);
      row.logf0pcc = logf0_pcc(f_conv, f_src);
      if (options.transcriber != nullptr && !m.text.empty()) {
        row.cer = 100.0 * error_rate(m.text, options.transcriber->transcribe(conv), options.token_level);
      }
      if (options.aesthetics != nullptr) row.aesthetics = options.aesthetics->score(conv);
    } catch (const PluginError&) {
      throw;
    } catch (const Error& e) {
      row = EvalRow{};
      row.id = m.id;
      row.error = e.what();
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string report_jsonl(const EvalReport& report) {
  using nlohmann::ordered_json;
  std::ostringstream out;
  ordered_json header;
  header["type"] = "header";
  header["version"] = 1;
  header["columns"] = {"id", "spk_sim", "logf0pcc", "cer", "ce", "cu"};
  out << header.dump() << '\n';
  for (const EvalRow& r : report.rows) {
    ordered_json j;
    if (!r.ok()) {
      j["type"] = "error";
      j["id"] = r.id;
      j["error"] = r.error;
    } else {
      j["type"] = "row";
      j["id"] = r.id;
      j["spk_sim"] = r.spk_sim;
      j["logf0pcc"] = r.logf0pcc;
      if (r.cer) j["cer"] = *r.cer;
      if (r.aesthetics) {
        j["ce"] = r.aesthetics->content_enjoyment;
        j["cu"] = r.aesthetics->content_usefulness;
      }
    }
    out << j.dump() << '\n';
  }
  if (!report.rows.empty()) {
    ordered_json s;
    s["type"] = "summary";
    s["scored"] = report.scored();
    s["errors"] = report.rows.size() - report.scored();
    s["spk_sim"] = report.mean_spk_sim();
    s["logf0pcc"] = report.mean_logf0pcc();
    if (auto c = report.mean_cer()) s["cer"] = *c;
    if (auto a = report.mean_aesthetics()) {
      s["ce"] = a->content_enjoyment;
      s["cu"] = a->content_usefulness;
    }
    out << s.dump() << '\n';
  }
  return out.str();
}

std::string report_table(const EvalReport& report) {
  const bool has_cer = report.mean_cer().has_value();
  const bool has_aes = report.mean_aesthetics().has_value();
  std::ostringstream out;
  out << "id\tspk_sim\tlogf0pcc";
  if (has_cer) out << "\tcer";
  if (has_aes) out << "\tce\tcu";
  out << '\n';
  for (const EvalRow& r : report.rows) {
    if (!r.ok()) {
      out << r.id << "\terror: " << r.error << '\n';
      continue;
    }
    out << r.id << '\t' << fmt(r.spk_sim, 4) << '\t' << fmt(r.logf0pcc, 2);
    if (has_cer) out << '\t' << (r.cer ? fmt(*r.cer, 2) : "-");
    if (has_aes) {
      out << '\t' << (r.aesthetics ? fmt(r.aesthetics->content_enjoyment, 2) : "-") << '\t'
          << (r.aesthetics ? fmt(r.aesthetics->content_usefulness, 2) : "-");
    }
    out << '\n';
  }
  if (report.scored() > 0) {
    out << "mean\t" << fmt(report.mean_spk_sim(), 4) << '\t' << fmt(report.mean_logf0pcc(), 2);
    if (auto c = report.mean_cer()) out << '\t' << fmt(*c, 2);
    if (auto a = report.mean_aesthetics()) out << '\t' << fmt(a->content_enjoyment, 2) << '\t' << fmt(a->content_usefulness, 2);
    out << '\n';
  }
  return out.str();
}

}  // namespace singflow
