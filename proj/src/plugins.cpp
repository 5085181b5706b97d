// SPDX-License-Identifier: Apache-2.0
#include "singflow/plugins.hpp"

#include "json.hpp"

#include <unistd.h>

#include <array>
#include <atomic>
#include <cstdio>
#include <memory>
#include <sys/wait.h>

namespace singflow {

namespace {

nlohmann::json parse_plugin_output(const std::string& out, const std::string& what) {
  const auto j = nlohmann::json::parse(out, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw PluginError(what + ": plugin did not print a JSON object");
  return j;
}

std::filesystem::path write_input(const TempDir& dir, const Waveform& w) {
  const auto path = dir.path() / "in.wav";
  save_wav(w, path, WavEncoding::kFloat32);
  return path;
}

Waveform load_plugin_wav(const std::filesystem::path& p, const std::string& what) {
  try {
    return load_wav(p);
  } catch (const DataError& e) {
    throw PluginError(what + ": " + e.what());
  }
}

}  // namespace

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out.push_back(c);
    }
  }
  out.push_back('\'');
  return out;
}

std::string run_command(const std::string& tmpl, const std::map<std::string, std::string>& vars) {
  std::string cmd;
  for (std::size_t i = 0; i < tmpl.size();) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i);
      if (close != std::string::npos) {
        const auto it = vars.find(tmpl.substr(i + 1, close - i - 1));
        if (it != vars.end()) {
          cmd += shell_quote(it->second);
          i = close + 1;
          continue;
        }
      }
    }
    cmd.push_back(tmpl[i++]);
  }
  std::unique_ptr<FILE, int (*)(FILE*)> pipe(popen(cmd.c_str(), "r"), pclose);
  if (!pipe) throw PluginError("cannot start plugin command: " + cmd);
  std::string out;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe.get())) > 0) out.append(buf.data(), n);
  const int status = pclose(pipe.release());
  if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw PluginError("plugin command failed: " + cmd);
  }
  return out;
}

TempDir::TempDir() {
  static std::atomic<unsigned> counter{0};
  const auto base = std::filesystem::temp_directory_path();
  for (int attempt = 0; attempt < 100; ++attempt) {
    auto p = base / ("singflow-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    if (std::filesystem::create_directory(p)) {
      path_ = p;
      return;
    }
  }
  throw DataError("cannot create a scratch directory");
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

Stems PassthroughSeparator::separate(const Waveform& mix) const {
  Stems s;
  s.lead = mix;
  s.back = Waveform{std::vector<float>(mix.size(), 0.0F), mix.sample_rate};
  s.inst = s.back;
  return s;
}

Stems CommandSeparator::separate(const Waveform& mix) const {
  TempDir dir;
  const auto in = write_input(dir, mix);
  const auto out_dir = dir.path() / "stems";
  std::filesystem::create_directory(out_dir);
  run_command(command_, {{"in", in.string()}, {"out_dir", out_dir.string()}});
  Stems s;
  s.lead = load_plugin_wav(out_dir / "lead.wav", "separator");
  s.back = load_plugin_wav(out_dir / "back.wav", "separator");
  s.inst = load_plugin_wav(out_dir / "inst.wav", "separator");
  return s;
}

Waveform CommandShifter::shift(const Waveform& w, int speaker) const {
  TempDir dir;
  const auto in = write_input(dir, w);
  const auto out = dir.path() / "out.wav";
  run_command(command_, {{"in", in.string()}, {"out", out.string()}, {"speaker", std::to_string(speaker)}});
  return load_plugin_wav(out, "shifter");
}

AestheticScore CommandAesthetic::score(const Waveform& w) const {
  TempDir dir;
  const auto j = parse_plugin_output(run_command(command_, {{"in", write_input(dir, w).string()}}), "aesthetic");
  if (!j.contains("ce") || !j.contains("cu") || !j["ce"].is_number() || !j["cu"].is_number()) {
    throw PluginError("aesthetic: output lacks numeric ce/cu");
  }
  return AestheticScore{j["ce"].get<double>(), j["cu"].get<double>()};
}

std::string CommandTranscriber::transcribe(const Waveform& w) const {
  TempDir dir;
  const auto j = parse_plugin_output(run_command(command_, {{"in", write_input(dir, w).string()}}), "asr");
  if (!j.contains("text") || !j["text"].is_string()) throw PluginError("asr: output lacks a text field");
  return j["text"].get<std::string>();
}

Vec CommandEmbedder::embed(const Waveform& w) const {
  TempDir dir;
  const auto j = parse_plugin_output(run_command(command_, {{"in", write_input(dir, w).string()}}), "embedder");
  if (!j.contains("embedding") || !j["embedding"].is_array()) throw PluginError("embedder: output lacks an embedding");
  std::vector<double> v;
  try {
    v = j["embedding"].get<std::vector<double>>();
  } catch (const nlohmann::json::exception&) {
    throw PluginError("embedder: embedding must be numeric");
  }
  if (v.empty()) throw PluginError("embedder: empty embedding");
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace singflow
