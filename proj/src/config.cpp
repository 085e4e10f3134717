#include "evf/config.hpp"

#include <cstdio>

#include "json.hpp"

#include "evf/errors.hpp"
#include "evf/io.hpp"

namespace evf {
namespace {

using nlohmann::json;

json to_json(const ExperimentConfig& c) {
  const auto& g = c.generator;
  const auto& m = c.mae;
  const auto& f = c.fusion;
  json j;
  j["profile"] = c.profile;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir.string();
  j["corpus_dir"] = c.corpus_dir.string();
  j["generator"] = {{"sessions", g.sessions},
                    {"subjects", g.subjects},
                    {"duration_s", g.duration_s},
                    {"sample_rate", g.sample_rate},
                    {"channels", g.channels},
                    {"seizures_per_session", g.seizures_per_session},
                    {"seizure_min_s", g.seizure_min_s},
                    {"seizure_max_s", g.seizure_max_s},
                    {"min_gap_s", g.min_gap_s},
                    {"background_rms", g.background_rms},
                    {"channel_correlation", g.channel_correlation},
                    {"ictal_amplitude", g.ictal_amplitude},
                    {"ictal_freq_min_hz", g.ictal_freq_min_hz},
                    {"ictal_freq_max_hz", g.ictal_freq_max_hz},
                    {"artifact_seizure_fraction", g.artifact_seizure_fraction},
                    {"artifact_amplitude", g.artifact_amplitude},
                    {"artifact_rhythm_gain", g.artifact_rhythm_gain},
                    {"interictal_artifacts_per_hour", g.interictal_artifacts_per_hour},
                    {"artifact_min_s", g.artifact_min_s},
                    {"artifact_max_s", g.artifact_max_s},
                    {"benign_motion_fraction", g.benign_motion_fraction},
                    {"benign_min_s", g.benign_min_s},
                    {"benign_max_s", g.benign_max_s},
                    {"line_noise_amplitude", g.line_noise_amplitude},
                    {"drift_amplitude", g.drift_amplitude},
                    {"drift_hz", g.drift_hz},
                    {"video_tokens", g.video_tokens},
                    {"video_dim", g.video_dim},
                    {"video_noise", g.video_noise},
                    {"motion_amplitude", g.motion_amplitude}};
  j["split"] = {{"mode", to_string(c.split.mode)},
                {"test_sessions", c.split.test_sessions},
                {"subject", c.split.subject}};
  j["windows"] = {{"length_s", c.windows.length_s},
                  {"stride_s", c.windows.stride_s},
                  {"negative_ratio", c.negative_ratio}};
  j["preprocess"] = {{"bandpass_low_hz", c.preprocess.bandpass_low_hz},
                     {"bandpass_high_hz", c.preprocess.bandpass_high_hz},
                     {"bandpass_order", c.preprocess.bandpass_order},
                     {"notch_hz", c.preprocess.notch_hz},
                     {"notch_q", c.preprocess.notch_q},
                     {"median_window_s", c.preprocess.median_window_s}};
  j["mae"] = {{"channels", m.channels},
              {"window_samples", m.window_samples},
              {"patch_len", m.patch_len},
              {"dim", m.dim},
              {"enc_layers", m.enc_layers},
              {"enc_heads", m.enc_heads},
              {"dec_layers", m.dec_layers},
              {"dec_heads", m.dec_heads},
              {"ff_dim", m.ff_dim},
              {"mask_ratio", m.mask_ratio},
              {"conv_kernel", m.conv_kernel},
              {"conv_channels", m.conv_channels},
              {"dropout", m.dropout}};
  j["pretrain"] = {{"steps", c.pretrain.steps},
                   {"epochs", c.pretrain_epochs},
                   {"batch_size", c.pretrain.batch_size},
                   {"lr", c.pretrain.lr},
                   {"lr_min", c.pretrain.lr_min},
                   {"weight_decay", c.pretrain.weight_decay},
                   {"eval_batch", c.pretrain.eval_batch}};
  j["fusion"] = {{"dim", f.dim},
                 {"adapter_layers", f.adapter_layers},
                 {"fusion_layers", f.fusion_layers},
                 {"kernels", f.kernels},
                 {"heads", f.heads},
                 {"ff_dim", f.ff_dim},
                 {"head_hidden", f.head_hidden},
                 {"dropout", f.dropout},
                 {"lambda_ot", f.lambda_ot},
                 {"ot_beta", f.ipot.beta},
                 {"ot_outer_iters", f.ipot.outer_iters},
                 {"ot_inner_iters", f.ipot.inner_iters}};
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"lr", c.train.lr},
                {"lr_min", c.train.lr_min},
                {"weight_decay", c.train.weight_decay}};
  j["postprocess"] = {{"merge_gap_s", c.postprocess.merge_gap_s},
                      {"min_duration_s", c.postprocess.min_duration_s},
                      {"threshold", f.threshold}};
  j["psd"] = {{"segment_s", c.psd_segment_s}, {"overlap", c.psd_overlap}};
  return j;
}

template <typename T>
void get(const json& j, const char* section, const char* key, T& out) {
  try {
    out = j.at(section).at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + section + "." + key + ": " + e.what());
  }
}

ExperimentConfig from_complete_json(const json& j) {
  ExperimentConfig c;
  try {
    c.profile = j.at("profile").get<std::string>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.out_dir = j.at("out_dir").get<std::string>();
    c.corpus_dir = j.at("corpus_dir").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  auto& g = c.generator;
  get(j, "generator", "sessions", g.sessions);
  get(j, "generator", "subjects", g.subjects);
  get(j, "generator", "duration_s", g.duration_s);
  get(j, "generator", "sample_rate", g.sample_rate);
  get(j, "generator", "channels", g.channels);
  get(j, "generator", "seizures_per_session", g.seizures_per_session);
  get(j, "generator", "seizure_min_s", g.seizure_min_s);
  get(j, "generator", "seizure_max_s", g.seizure_max_s);
  get(j, "generator", "min_gap_s", g.min_gap_s);
  get(j, "generator", "background_rms", g.background_rms);
  get(j, "generator", "channel_correlation", g.channel_correlation);
  get(j, "generator", "ictal_amplitude", g.ictal_amplitude);
  get(j, "generator", "ictal_freq_min_hz", g.ictal_freq_min_hz);
  get(j, "generator", "ictal_freq_max_hz", g.ictal_freq_max_hz);
  get(j, "generator", "artifact_seizure_fraction", g.artifact_seizure_fraction);
  get(j, "generator", "artifact_amplitude", g.artifact_amplitude);
  get(j, "generator", "artifact_rhythm_gain", g.artifact_rhythm_gain);
  get(j, "generator", "interictal_artifacts_per_hour", g.interictal_artifacts_per_hour);
  get(j, "generator", "artifact_min_s", g.artifact_min_s);
  get(j, "generator", "artifact_max_s", g.artifact_max_s);
  get(j, "generator", "benign_motion_fraction", g.benign_motion_fraction);
  get(j, "generator", "benign_min_s", g.benign_min_s);
  get(j, "generator", "benign_max_s", g.benign_max_s);
  get(j, "generator", "line_noise_amplitude", g.line_noise_amplitude);
  get(j, "generator", "drift_amplitude", g.drift_amplitude);
  get(j, "generator", "drift_hz", g.drift_hz);
  get(j, "generator", "video_tokens", g.video_tokens);
  get(j, "generator", "video_dim", g.video_dim);
  get(j, "generator", "video_noise", g.video_noise);
  get(j, "generator", "motion_amplitude", g.motion_amplitude);
  g.seed = c.generator_seed();

  std::string mode;
  get(j, "split", "mode", mode);
  c.split.mode = parse_split_mode(mode);
  get(j, "split", "test_sessions", c.split.test_sessions);
  get(j, "split", "subject", c.split.subject);

  get(j, "windows", "length_s", c.windows.length_s);
  get(j, "windows", "stride_s", c.windows.stride_s);
  get(j, "windows", "negative_ratio", c.negative_ratio);

  get(j, "preprocess", "bandpass_low_hz", c.preprocess.bandpass_low_hz);
  get(j, "preprocess", "bandpass_high_hz", c.preprocess.bandpass_high_hz);
  get(j, "preprocess", "bandpass_order", c.preprocess.bandpass_order);
  get(j, "preprocess", "notch_hz", c.preprocess.notch_hz);
  get(j, "preprocess", "notch_q", c.preprocess.notch_q);
  get(j, "preprocess", "median_window_s", c.preprocess.median_window_s);

  auto& m = c.mae;
  get(j, "mae", "channels", m.channels);
  get(j, "mae", "window_samples", m.window_samples);
  get(j, "mae", "patch_len", m.patch_len);
  get(j, "mae", "dim", m.dim);
  get(j, "mae", "enc_layers", m.enc_layers);
  get(j, "mae", "enc_heads", m.enc_heads);
  get(j, "mae", "dec_layers", m.dec_layers);
  get(j, "mae", "dec_heads", m.dec_heads);
  get(j, "mae", "ff_dim", m.ff_dim);
  get(j, "mae", "mask_ratio", m.mask_ratio);
  get(j, "mae", "conv_kernel", m.conv_kernel);
  get(j, "mae", "conv_channels", m.conv_channels);
  get(j, "mae", "dropout", m.dropout);

  get(j, "pretrain", "steps", c.pretrain.steps);
  get(j, "pretrain", "epochs", c.pretrain_epochs);
  get(j, "pretrain", "batch_size", c.pretrain.batch_size);
  get(j, "pretrain", "lr", c.pretrain.lr);
  get(j, "pretrain", "lr_min", c.pretrain.lr_min);
  get(j, "pretrain", "weight_decay", c.pretrain.weight_decay);
  get(j, "pretrain", "eval_batch", c.pretrain.eval_batch);
  c.pretrain.seed = c.pretrain_seed();

  auto& f = c.fusion;
  get(j, "fusion", "dim", f.dim);
  get(j, "fusion", "adapter_layers", f.adapter_layers);
  get(j, "fusion", "fusion_layers", f.fusion_layers);
  get(j, "fusion", "kernels", f.kernels);
  get(j, "fusion", "heads", f.heads);
  get(j, "fusion", "ff_dim", f.ff_dim);
  get(j, "fusion", "head_hidden", f.head_hidden);
  get(j, "fusion", "dropout", f.dropout);
  get(j, "fusion", "lambda_ot", f.lambda_ot);
  get(j, "fusion", "ot_beta", f.ipot.beta);
  get(j, "fusion", "ot_outer_iters", f.ipot.outer_iters);
  get(j, "fusion", "ot_inner_iters", f.ipot.inner_iters);

  get(j, "train", "epochs", c.train.epochs);
  get(j, "train", "batch_size", c.train.batch_size);
  get(j, "train", "lr", c.train.lr);
  get(j, "train", "lr_min", c.train.lr_min);
  get(j, "train", "weight_decay", c.train.weight_decay);
  c.train.seed = c.train_seed();

  get(j, "postprocess", "merge_gap_s", c.postprocess.merge_gap_s);
  get(j, "postprocess", "min_duration_s", c.postprocess.min_duration_s);
  get(j, "postprocess", "threshold", f.threshold);
  get(j, "psd", "segment_s", c.psd_segment_s);
  get(j, "psd", "overlap", c.psd_overlap);

  c.generator.validate();
  c.mae.validate();
  c.fusion.validate();
  if (c.mae.channels != c.generator.channels) {
    throw ConfigError("config: mae.channels (" + std::to_string(c.mae.channels) + ") must match generator.channels (" +
                      std::to_string(c.generator.channels) + ")");
  }
  const auto window_samples = static_cast<std::size_t>(c.windows.length_s * c.generator.sample_rate + 0.5);
  if (window_samples != c.mae.window_samples) {
    throw ConfigError("config: mae.window_samples must equal windows.length_s * sample_rate (" +
                      std::to_string(window_samples) + ")");
  }
  return c;
}

// Every key of `given` must exist in `known`, recursively.
void check_keys(const json& given, const json& known, const std::string& path) {
  if (!given.is_object() || !known.is_object()) return;
  for (const auto& [key, value] : given.items()) {
    if (!known.contains(key)) throw ConfigError("config: unknown key '" + path + key + "'");
    check_keys(value, known.at(key), path + key + ".");
  }
}

ExperimentConfig desk_profile() {
  ExperimentConfig c;
  c.profile = "desk";
  c.out_dir = "runs/desk";
  auto& g = c.generator;
  g.sessions = 10;
  g.subjects = 5;
  g.duration_s = 600.0;
  g.interictal_artifacts_per_hour = 12.0;
  c.split.test_sessions = 5;
  c.split.subject = "m105";

  auto& m = c.mae;
  m.dim = 32;
  m.enc_layers = 2;
  m.enc_heads = 4;
  m.dec_layers = 1;
  m.dec_heads = 4;
  m.ff_dim = 64;
  c.pretrain.steps = 200;
  c.pretrain.batch_size = 8;
  c.pretrain.lr = 1e-3;
  c.pretrain.lr_min = 1e-5;

  auto& f = c.fusion;
  f.dim = 32;
  f.adapter_layers = 4;
  f.fusion_layers = 4;
  f.heads = 4;
  f.ff_dim = 64;
  f.head_hidden = 32;
  c.train.epochs = 6;
  c.train.batch_size = 32;
  c.train.lr = 1e-3;
  c.train.lr_min = 1e-5;
  return c;
}

ExperimentConfig full_profile() {
  ExperimentConfig c;
  c.profile = "full";
  c.out_dir = "runs/full";
  auto& g = c.generator;
  g.sessions = 93;
  g.subjects = 15;
  g.duration_s = 86400.0;
  g.seizures_per_session = 3.0;
  c.split.test_sessions = 5;
  c.split.subject = "m110";
  c.mae = MaeConfig{};
  c.pretrain.batch_size = 512;
  c.pretrain.lr = 1e-4;
  c.pretrain.lr_min = 0.0;
  c.pretrain.weight_decay = 0.05;
  c.pretrain_epochs = 1000;
  c.fusion = FusionConfig{};
  c.train = TrainSchedule{};
  return c;
}

ExperimentConfig smoke_profile() {
  ExperimentConfig c = desk_profile();
  c.profile = "smoke";
  c.out_dir = "runs/smoke";
  c.generator.sessions = 3;
  c.generator.subjects = 3;
  c.generator.duration_s = 300.0;
  c.generator.seizures_per_session = 2.0;
  c.split.test_sessions = 1;
  c.split.subject = "m103";
  c.mae.enc_layers = 1;
  c.mae.dim = 16;
  c.mae.enc_heads = 2;
  c.mae.dec_heads = 2;
  c.mae.ff_dim = 32;
  c.pretrain.steps = 5;
  c.pretrain.batch_size = 2;
  c.pretrain.eval_batch = 4;
  c.fusion.dim = 16;
  c.fusion.heads = 2;
  c.fusion.ff_dim = 32;
  c.fusion.head_hidden = 16;
  c.fusion.adapter_layers = 1;
  c.fusion.fusion_layers = 1;
  c.train.epochs = 1;
  c.train.batch_size = 16;
  return c;
}

}  // namespace

std::filesystem::path ExperimentConfig::corpus_path() const {
  return corpus_dir.empty() ? out_dir / "corpus" : corpus_dir;
}

std::vector<std::string> profile_names() { return {"desk", "full", "smoke"}; }

ExperimentConfig profile_config(const std::string& name) {
  ExperimentConfig c;
  if (name == "desk")
    c = desk_profile();
  else if (name == "full")
    c = full_profile();
  else if (name == "smoke")
    c = smoke_profile();
  else
    throw ConfigError("unknown profile '" + name + "' (expected desk, full or smoke)");
  c.generator.seed = c.generator_seed();
  c.pretrain.seed = c.pretrain_seed();
  c.train.seed = c.train_seed();
  return c;
}

std::string config_to_json(const ExperimentConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

ExperimentConfig config_from_json(const std::string& json_text) {
  json given;
  try {
    given = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!given.is_object()) throw ConfigError("config: top level must be an object");
  const std::string profile = given.value("profile", std::string("desk"));
  json base = to_json(profile_config(profile));
  check_keys(given, base, "");
  base.merge_patch(given);
  return from_complete_json(base);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file '" + path.string() + "' not found");
  return config_from_json(read_text(path));
}

ExperimentConfig apply_overrides(const ExperimentConfig& cfg, const std::vector<std::string>& overrides) {
  json j = to_json(cfg);
  const json known = j;
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + o + "' is not key=value");
    const std::string key = o.substr(0, eq), text = o.substr(eq + 1);
    json value;
    try {
      value = json::parse(text);
    } catch (const json::exception&) {
      value = text;
    }
    json* node = &j;
    const json* ref = &known;
    std::size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (!ref->is_object() || !ref->contains(part)) throw ConfigError("config: unknown key '" + key + "'");
      ref = &ref->at(part);
      node = &(*node)[part];
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    *node = value;
  }
  return from_complete_json(j);
}

std::string config_fingerprint(const ExperimentConfig& cfg) {
  auto j = to_json(cfg);
  j.erase("out_dir");
  j.erase("corpus_dir");
  const std::string canon = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : canon) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace evf
