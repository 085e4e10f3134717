#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "evf/errors.hpp"
#include "evf/pipeline.hpp"

namespace {

struct GlobalOptions {
  std::string config;
  std::string profile = "desk";
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string split;
  std::vector<std::string> overrides;
};

struct ModelOptions {
  std::string model = "fusion";
  std::string ablation;
};

evf::ExperimentConfig resolve(const GlobalOptions& g) {
  evf::ExperimentConfig cfg = g.config.empty() ? evf::profile_config(g.profile) : evf::load_config(g.config);
  std::vector<std::string> overrides = g.overrides;
  if (g.seed) overrides.push_back("seed=" + std::to_string(*g.seed));
  if (!g.out.empty()) overrides.push_back("out_dir=\"" + g.out + "\"");
  if (!g.split.empty()) overrides.push_back("split.mode=\"" + g.split + "\"");
  return overrides.empty() ? cfg : evf::apply_overrides(cfg, overrides);
}

void add_model_options(CLI::App* cmd, ModelOptions& m) {
  cmd->add_option("--model", m.model, "Model variant")
      ->check(CLI::IsMember({"fusion", "eeg_only", "video_only"}))
      ->capture_default_str();
  cmd->add_option("--ablation", m.ablation, "Ablation to apply")->check(CLI::IsMember({"no_ot", "no_pretrain"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Video-EEG seizure detection: synthetic corpus, MAE pretraining, fusion training and evaluation"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("--profile", g.profile, "Built-in profile when no config file is given")
      ->check(CLI::IsMember({"desk", "full", "smoke"}))
      ->capture_default_str();
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--split", g.split, "Session split")->check(CLI::IsMember({"random-session", "held-out-subject"}));
  app.add_option("--set", g.overrides, "Config override key=value (repeatable)");

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic corpus");
  auto* pre = app.add_subcommand("pretrain", "Pretrain the EEG masked autoencoder");

  ModelOptions train_opts, detect_opts, eval_opts;
  auto* train = app.add_subcommand("train", "Train a seizure classifier");
  add_model_options(train, train_opts);

  auto* detect = app.add_subcommand("detect", "Write window-level seizure probabilities");
  add_model_options(detect, detect_opts);
  std::vector<std::string> sessions;
  std::string plan_dump;
  detect->add_option("--session", sessions, "Session id (repeatable; default: test split)");
  detect->add_option("--dump-plans", plan_dump, "CSV file for per-window transport plans");

  auto* eval = app.add_subcommand("eval", "Score predictions against annotations");
  add_model_options(eval, eval_opts);

  auto* psd = app.add_subcommand("psd", "Welch power spectrum of a session or EEG file");
  std::string psd_source;
  psd->add_option("source", psd_source, "Corpus session id or EEG file (.eeg or .csv)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const evf::ExperimentConfig cfg = resolve(g);
    if (*gen) {
      evf::cmd_gen_data(cfg, std::cout);
    } else if (*pre) {
      evf::cmd_pretrain(cfg, std::cout);
    } else if (*train) {
      evf::cmd_train(cfg, evf::parse_variant(train_opts.model), evf::parse_ablation(train_opts.ablation), std::cout);
    } else if (*detect) {
      evf::cmd_detect(cfg, evf::parse_variant(detect_opts.model), evf::parse_ablation(detect_opts.ablation), sessions,
                      plan_dump, std::cout);
    } else if (*eval) {
      evf::cmd_eval(cfg, evf::parse_variant(eval_opts.model), evf::parse_ablation(eval_opts.ablation), std::cout);
    } else if (*psd) {
      evf::cmd_psd(cfg, psd_source, std::cout);
    }
  } catch (const evf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
