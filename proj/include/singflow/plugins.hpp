// SPDX-License-Identifier: Apache-2.0
//
// Subprocess adapters for the external models. A command template is run by
// /bin/sh after substituting shell-quoted placeholders:
//
//   separator  {in} {out_dir}          writes lead.wav, back.wav, inst.wav
//   shifter    {in} {out} {speaker}    writes the shifted WAV
//   aesthetic  {in}                    prints {"ce": x, "cu": y}
//   asr        {in}                    prints {"text": "..."}
//   embedder   {in}                    prints {"embedding": [...]}
//
// A non-zero exit status or malformed output raises PluginError.
#pragma once

#include "singflow/encoders.hpp"
#include "singflow/rewards.hpp"
#include "singflow/signal.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <string>

namespace singflow {

std::string shell_quote(const std::string& s);
/// Runs the substituted template and returns its standard output.
std::string run_command(const std::string& tmpl, const std::map<std::string, std::string>& vars);

/// Unique scratch directory removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

struct Stems {
  Waveform lead;
  Waveform back;
  Waveform inst;
};

class Separator {
 public:
  virtual ~Separator() = default;
  virtual Stems separate(const Waveform& mix) const = 0;
  virtual std::string name() const = 0;
};

/// Treats the input as an already clean vocal: lead = input, others silent.
class PassthroughSeparator final : public Separator {
 public:
  Stems separate(const Waveform& mix) const override;
  std::string name() const override { return "passthrough"; }
};

class CommandSeparator final : public Separator {
 public:
  explicit CommandSeparator(std::string command) : command_(std::move(command)) {}
  Stems separate(const Waveform& mix) const override;
  std::string name() const override { return "command"; }

 private:
  std::string command_;
};

class CommandShifter final : public TimbreShifter {
 public:
  CommandShifter(std::string command, int speakers) : command_(std::move(command)), speakers_(speakers) {}
  int num_speakers() const override { return speakers_; }
  Waveform shift(const Waveform& w, int speaker) const override;
  std::string name() const override { return "command"; }

 private:
  std::string command_;
  int speakers_;
};

class CommandAesthetic final : public AestheticScorer {
 public:
  CommandAesthetic(std::string command, double lo, double hi) : command_(std::move(command)), lo_(lo), hi_(hi) {}
  AestheticScore score(const Waveform& w) const override;
  double range_min() const override { return lo_; }
  double range_max() const override { return hi_; }
  std::string name() const override { return "command"; }

 private:
  std::string command_;
  double lo_;
  double hi_;
};

class CommandTranscriber final : public Transcriber {
 public:
  explicit CommandTranscriber(std::string command) : command_(std::move(command)) {}
  std::string transcribe(const Waveform& w) const override;
  std::string name() const override { return "command"; }

 private:
  std::string command_;
};

class CommandEmbedder final : public TimbreEmbedder {
 public:
  explicit CommandEmbedder(std::string command) : command_(std::move(command)) {}
  Vec embed(const Waveform& w) const override;
  std::string name() const override { return "command"; }

 private:
  std::string command_;
};

}  // namespace singflow
