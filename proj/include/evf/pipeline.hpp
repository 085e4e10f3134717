#pragma once

// End-to-end experiment driver shared by the command-line tool, the
// acceptance runner and the Python module.

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "evf/config.hpp"

namespace evf {

struct Ablation {
  bool no_ot = false;
  bool no_pretrain = false;
};

// "", "none", "no_ot", "no_pretrain" (dashes accepted).
Ablation parse_ablation(const std::string& s);
std::string model_name(ModelVariant variant, const Ablation& ablation);

struct ArtifactPaths {
  std::filesystem::path out;
  std::filesystem::path corpus;
  std::filesystem::path mae_checkpoint() const { return out / "mae.ckpt"; }
  std::filesystem::path pretrain_log() const { return out / "logs" / "pretrain.jsonl"; }
  std::filesystem::path model_checkpoint(const std::string& name) const { return out / "models" / (name + ".ckpt"); }
  std::filesystem::path train_log(const std::string& name) const { return out / "logs" / ("train_" + name + ".jsonl"); }
  std::filesystem::path predictions(const std::string& name) const { return out / "predictions" / (name + ".csv"); }
  std::filesystem::path report_json(const std::string& name) const { return out / "reports" / (name + ".json"); }
  std::filesystem::path report_table(const std::string& name) const { return out / "reports" / (name + ".txt"); }
  std::filesystem::path event_audit(const std::string& name) const { return out / "reports" / (name + "_events.csv"); }
  std::filesystem::path psd(const std::string& session) const { return out / "psd" / (session + ".csv"); }
};

ArtifactPaths artifact_paths(const ExperimentConfig& cfg);

struct TrainedModel {
  ModelVariant variant = ModelVariant::fusion;
  Ablation ablation;
  MaeModel encoder;
  FusionModel classifier;
  TrainResult result;

  // Classifier parameters followed by the encoder parameters.
  nn::ParamList parameters() const;
};

class Experiment {
 public:
  Experiment(ExperimentConfig cfg, std::vector<Session> sessions);
  static Experiment from_disk(const ExperimentConfig& cfg);

  const ExperimentConfig& config() const { return cfg_; }
  const std::vector<Session>& sessions() const { return sessions_; }
  const SessionSplit& split() const { return split_; }
  const NormalizedEeg& eeg(std::size_t session) const;

  MaeModel new_encoder() const;
  std::vector<WindowRef> pretrain_windows() const;
  PretrainResult pretrain(MaeModel& model, const std::function<void(std::size_t, double, double)>& on_step = {}) const;

  // Downsampled, labeled training windows from the train split.
  std::vector<WindowInput> training_windows() const;

  TrainedModel new_model(ModelVariant variant, const Ablation& ablation, const MaeModel* pretrained) const;
  // Throws ConfigError when a pretrained encoder is required but missing.
  TrainedModel train(ModelVariant variant, const Ablation& ablation, const MaeModel* pretrained,
                     const std::function<void(const TrainLogEntry&)>& on_step = {}) const;

  // EEG features [N x C*D] of one window from a frozen encoder (cached).
  Tensor frozen_features(const MaeModel& encoder, std::size_t session, std::size_t window) const;

  std::vector<WindowPrediction> predict(const TrainedModel& model, std::size_t session,
                                        const std::function<void(std::size_t, const Matrix&)>& on_plan = {}) const;
  SessionOutcome outcome(std::size_t session, const std::vector<WindowPrediction>& predictions) const;
  std::vector<SessionOutcome> detect(const TrainedModel& model, const std::vector<std::size_t>& sessions) const;

  std::size_t session_index(const std::string& id) const;

 private:
  ExperimentConfig cfg_;
  std::vector<Session> sessions_;
  SessionSplit split_;
  mutable std::vector<std::unique_ptr<NormalizedEeg>> eeg_;
  mutable std::map<std::uint64_t, std::vector<std::vector<Tensor>>> feature_cache_;
};

void save_mae(const std::filesystem::path& path, const MaeModel& model, const ExperimentConfig& cfg);
MaeModel load_mae(const std::filesystem::path& path, const ExperimentConfig& cfg);
void save_model(const std::filesystem::path& path, const TrainedModel& model, const ExperimentConfig& cfg);
TrainedModel load_model(const std::filesystem::path& path, const Experiment& exp, ModelVariant variant,
                        const Ablation& ablation);

// Command implementations. Progress goes to `log`; failures throw.
void cmd_gen_data(const ExperimentConfig& cfg, std::ostream& log);
void cmd_pretrain(const ExperimentConfig& cfg, std::ostream& log);
void cmd_train(const ExperimentConfig& cfg, ModelVariant variant, const Ablation& ablation, std::ostream& log);
// Empty `session_ids` means every test-split session.
void cmd_detect(const ExperimentConfig& cfg, ModelVariant variant, const Ablation& ablation,
                const std::vector<std::string>& session_ids, const std::filesystem::path& plan_dump,
                std::ostream& log);
void cmd_eval(const ExperimentConfig& cfg, ModelVariant variant, const Ablation& ablation, std::ostream& log);
// `source` is a corpus session id or a path to an EEG (.eeg or .csv) file.
void cmd_psd(const ExperimentConfig& cfg, const std::string& source, std::ostream& log);

}  // namespace evf
