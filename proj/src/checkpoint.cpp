// SPDX-License-Identifier: Apache-2.0
#include "singflow/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace singflow {

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'F', 'C', 'K', 'P', 'T', '\0', '\1'};

template <class T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_vec(std::string& out, const Vec& v) {
  if (v.size() > 0) out.append(reinterpret_cast<const char*>(v.data()), sizeof(double) * static_cast<std::size_t>(v.size()));
}

class Cursor {
 public:
  explicit Cursor(const std::string& bytes) : bytes_(bytes) {}

  const char* take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw DataError("corrupt checkpoint: truncated");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  template <class T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }

  Vec vec(std::int64_t n) {
    if (n < 0) throw DataError("corrupt checkpoint: negative length");
    Vec v(n);
    if (n > 0) std::memcpy(v.data(), take(sizeof(double) * static_cast<std::size_t>(n)), sizeof(double) * static_cast<std::size_t>(n));
    return v;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  Json header;
  header["format"] = "singflow-checkpoint";
  header["stage"] = ckpt.stage;
  header["step"] = ckpt.step;
  header["config"] = to_json(ckpt.config);
  header["mel_norm"] = Json{{"mean", ckpt.norm.mean}, {"scale", ckpt.norm.scale}};
  header["channel_scales"] = to_std(ckpt.channel_scales);
  header["param_count"] = ckpt.params.size();
  header["optimizer"] = Json{{"step", ckpt.opt.step},
                             {"first", ckpt.opt.first.size()},
                             {"second", ckpt.opt.second.size()}};
  const std::string text = header.dump();

  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out += text;
  put_vec(out, ckpt.params);
  put_vec(out, ckpt.opt.first);
  put_vec(out, ckpt.opt.second);
  write_file_atomic(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();

  Cursor cur(bytes);
  if (std::memcmp(cur.take(sizeof kMagic), kMagic, sizeof kMagic) != 0) {
    throw DataError("corrupt checkpoint: bad magic in " + path.string());
  }
  const auto version = cur.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  const auto header_len = cur.get<std::uint64_t>();
  const char* text = cur.take(header_len);

  Checkpoint ck;
  std::int64_t n_params = 0;
  std::int64_t n_first = 0;
  std::int64_t n_second = 0;
  try {
    const Json h = Json::parse(text, text + header_len);
    if (h.at("format") != "singflow-checkpoint") throw DataError("corrupt checkpoint: unknown format tag");
    ck.stage = h.at("stage").get<std::string>();
    ck.step = h.at("step").get<std::int64_t>();
    ck.config = run_config_from_json(h.at("config"));
    ck.norm.mean = h.at("mel_norm").at("mean").get<double>();
    ck.norm.scale = h.at("mel_norm").at("scale").get<double>();
    const auto scales = h.at("channel_scales").get<std::vector<double>>();
    ck.channel_scales = Eigen::Map<const Vec>(scales.data(), static_cast<Eigen::Index>(scales.size()));
    n_params = h.at("param_count").get<std::int64_t>();
    ck.opt.step = h.at("optimizer").at("step").get<std::int64_t>();
    n_first = h.at("optimizer").at("first").get<std::int64_t>();
    n_second = h.at("optimizer").at("second").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corrupt checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("corrupt checkpoint config: ") + e.what());
  }
  ck.params = cur.vec(n_params);
  ck.opt.first = cur.vec(n_first);
  ck.opt.second = cur.vec(n_second);
  if (!cur.done()) throw DataError("corrupt checkpoint: trailing bytes");
  if (!ck.params.allFinite()) throw DataError("corrupt checkpoint: non-finite parameters");
  return ck;
}

}  // namespace singflow
