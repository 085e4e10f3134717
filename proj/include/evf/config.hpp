#pragma once

// Experiment configuration: one JSON document with named profiles and
// dotted-key command-line overrides.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "evf/data.hpp"
#include "evf/dsp.hpp"
#include "evf/eval.hpp"
#include "evf/fusion.hpp"
#include "evf/mae.hpp"
#include "evf/synth.hpp"

namespace evf {

struct ExperimentConfig {
  std::string profile = "desk";
  std::uint64_t seed = 7;
  std::filesystem::path out_dir = "runs/desk";
  std::filesystem::path corpus_dir;  // empty: <out_dir>/corpus

  GeneratorSpec generator;
  SplitParams split;
  WindowConfig windows;
  std::size_t negative_ratio = 10;
  PreprocessConfig preprocess;

  MaeConfig mae;
  PretrainSchedule pretrain;
  std::size_t pretrain_epochs = 0;  // when > 0, overrides pretrain.steps

  FusionConfig fusion;
  TrainSchedule train;

  PostprocessParams postprocess;
  double psd_segment_s = 2.0;
  double psd_overlap = 0.5;

  std::filesystem::path corpus_path() const;
  // Seeds of the individual stages, all derived from `seed`.
  std::uint64_t generator_seed() const { return seed; }
  std::uint64_t split_seed() const { return seed + 1; }
  std::uint64_t pretrain_seed() const { return seed + 2; }
  std::uint64_t model_seed() const { return seed + 3; }
  std::uint64_t train_seed() const { return seed + 4; }
};

// "full": published hyperparameters at full scale. "desk": small enough for
// a laptop CPU. "smoke": seconds-long end-to-end run for CI.
ExperimentConfig profile_config(const std::string& name);
std::vector<std::string> profile_names();

std::string config_to_json(const ExperimentConfig& cfg);
// Keys missing from `json_text` keep the values of the profile named by its
// "profile" key (desk when absent). Unknown keys raise ConfigError.
ExperimentConfig config_from_json(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
// "a.b.c=value"; value parsed as JSON when possible, else as a string.
ExperimentConfig apply_overrides(const ExperimentConfig& cfg, const std::vector<std::string>& overrides);

// 16 hex digits of FNV-1a over the canonical JSON form, output paths excluded.
std::string config_fingerprint(const ExperimentConfig& cfg);

}  // namespace evf
