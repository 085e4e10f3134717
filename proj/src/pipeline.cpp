#include "evf/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "json.hpp"

#include "evf/checkpoint.hpp"
#include "evf/errors.hpp"
#include "evf/io.hpp"

namespace evf {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void ensure_parent(const fs::path& path) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
}

void require_file(const fs::path& path, const std::string& what, const std::string& hint) {
  if (!fs::exists(path)) throw IoError(what + " '" + path.string() + "' not found (" + hint + ")");
}

std::string ablation_string(const Ablation& a) {
  if (a.no_ot && a.no_pretrain) return "no_ot+no_pretrain";
  if (a.no_ot) return "no_ot";
  if (a.no_pretrain) return "no_pretrain";
  return "none";
}

bool needs_encoder(ModelVariant v) { return v != ModelVariant::video_only; }

}  // namespace

Ablation parse_ablation(const std::string& s) {
  Ablation a;
  if (s.empty() || s == "none") return a;
  if (s == "no_ot" || s == "no-ot")
    a.no_ot = true;
  else if (s == "no_pretrain" || s == "no-pretrain")
    a.no_pretrain = true;
  else
    throw ConfigError("unknown ablation '" + s + "' (expected no_ot or no_pretrain)");
  return a;
}

std::string model_name(ModelVariant variant, const Ablation& ablation) {
  std::string name = to_string(variant);
  if (ablation.no_ot) name += "_no_ot";
  if (ablation.no_pretrain) name += "_no_pretrain";
  return name;
}

ArtifactPaths artifact_paths(const ExperimentConfig& cfg) { return {cfg.out_dir, cfg.corpus_path()}; }

nn::ParamList TrainedModel::parameters() const {
  nn::ParamList out = classifier.parameters();
  if (needs_encoder(variant)) {
    for (auto& p : encoder.encoder_parameters()) out.push_back(p);
  }
  return out;
}

Experiment::Experiment(ExperimentConfig cfg, std::vector<Session> sessions)
    : cfg_(std::move(cfg)), sessions_(std::move(sessions)) {
  if (sessions_.empty()) throw DataError("experiment: corpus has no sessions");
  std::vector<std::string> subjects;
  for (const auto& s : sessions_) subjects.push_back(s.subject);
  Rng rng(cfg_.split_seed());
  split_ = split_sessions(subjects, cfg_.split, rng);
  eeg_.resize(sessions_.size());
}

Experiment Experiment::from_disk(const ExperimentConfig& cfg) {
  return Experiment(cfg, load_corpus(cfg.corpus_path()));
}

const NormalizedEeg& Experiment::eeg(std::size_t session) const {
  if (!eeg_.at(session)) {
    eeg_[session] = std::make_unique<NormalizedEeg>(prepare_eeg(sessions_[session].recording, cfg_.preprocess));
  }
  return *eeg_[session];
}

std::size_t Experiment::session_index(const std::string& id) const {
  for (std::size_t i = 0; i < sessions_.size(); ++i)
    if (sessions_[i].id == id) return i;
  throw DataError("session '" + id + "' is not in the corpus");
}

MaeModel Experiment::new_encoder() const {
  Rng rng(cfg_.pretrain_seed());
  return MaeModel(cfg_.mae, rng);
}

std::vector<WindowRef> Experiment::pretrain_windows() const {
  std::vector<WindowRef> out;
  for (std::size_t s : split_.train) {
    for (const auto& w : segment_windows(sessions_[s], s, cfg_.windows)) out.push_back({s, w.start_s});
  }
  return out;
}

PretrainResult Experiment::pretrain(MaeModel& model,
                                    const std::function<void(std::size_t, double, double)>& on_step) const {
  std::vector<NormalizedEeg> prepared(sessions_.size());
  for (std::size_t s : split_.train) prepared[s] = eeg(s);
  PretrainSchedule schedule = cfg_.pretrain;
  const auto windows = pretrain_windows();
  if (cfg_.pretrain_epochs > 0) {
    schedule.steps = cfg_.pretrain_epochs * ((windows.size() + schedule.batch_size - 1) / schedule.batch_size);
  }
  return evf::pretrain(model, prepared, windows, schedule, on_step);
}

std::vector<WindowInput> Experiment::training_windows() const {
  std::vector<WindowSample> all;
  for (std::size_t s : split_.train) {
    auto w = segment_windows(sessions_[s], s, cfg_.windows);
    all.insert(all.end(), w.begin(), w.end());
  }
  Rng rng(cfg_.train_seed() ^ 0xd0'5a'3b'1eull);
  const auto kept = downsample_negatives(all, cfg_.negative_ratio, rng);
  std::vector<WindowInput> out;
  out.reserve(kept.size());
  for (const auto& w : kept) out.push_back({w.session, w.index, w.start_s, w.seizure ? 1 : 0});
  return out;
}

TrainedModel Experiment::new_model(ModelVariant variant, const Ablation& ablation, const MaeModel* pretrained) const {
  TrainedModel m;
  m.variant = variant;
  m.ablation = ablation;
  m.encoder = pretrained && !ablation.no_pretrain ? *pretrained : new_encoder();
  FusionConfig fc = cfg_.fusion;
  fc.variant = variant;
  if (ablation.no_ot) fc.lambda_ot = 0.0;
  Rng rng(cfg_.model_seed());
  const std::size_t video_dim = sessions_.front().video.dim;
  m.classifier = FusionModel(fc, cfg_.mae.channels * cfg_.mae.dim, video_dim, rng);
  return m;
}

Tensor Experiment::frozen_features(const MaeModel& encoder, std::size_t session, std::size_t window) const {
  const std::uint64_t key = nn::checksum(encoder.encoder_parameters());
  auto& per_session = feature_cache_[key];
  if (per_session.empty()) per_session.resize(sessions_.size());
  auto& slots = per_session[session];
  if (slots.empty()) slots.resize(window_count(sessions_[session].duration_s, cfg_.windows));
  Tensor& slot = slots.at(window);
  if (!slot.defined()) {
    NoGradGuard guard;
    const double start = static_cast<double>(window) * cfg_.windows.stride_s;
    slot = merge_channels(encoder.encode_all(window_grid(eeg(session), start, cfg_.mae)), cfg_.mae.channels).detach();
  }
  return slot;
}

TrainedModel Experiment::train(ModelVariant variant, const Ablation& ablation, const MaeModel* pretrained,
                               const std::function<void(const TrainLogEntry&)>& on_step) const {
  if (needs_encoder(variant) && !ablation.no_pretrain && pretrained == nullptr) {
    throw ConfigError("training '" + model_name(variant, ablation) +
                      "' needs a pretrained EEG encoder (run pretrain or use the no_pretrain ablation)");
  }
  TrainedModel m = new_model(variant, ablation, pretrained);
  nn::ParamList trainable = m.classifier.parameters();
  if (needs_encoder(variant)) {
    nn::ParamList enc = m.encoder.encoder_parameters();
    nn::set_trainable(enc, ablation.no_pretrain);
    if (ablation.no_pretrain) trainable.insert(trainable.end(), enc.begin(), enc.end());
  }

  FeatureSource features;
  features.video = [this](const WindowInput& w) { return sessions_[w.session].video.window_tensor(w.window); };
  if (!needs_encoder(variant)) {
    features.eeg = [](const WindowInput&, Rng&, bool) { return Tensor(); };
  } else if (ablation.no_pretrain) {
    const MaeModel& enc = m.encoder;
    features.eeg = [this, &enc](const WindowInput& w, Rng& rng, bool training) {
      const PatchGrid grid = window_grid(eeg(w.session), w.start_s, cfg_.mae);
      return merge_channels(enc.encode(enc.tokens(grid), rng, training), cfg_.mae.channels);
    };
  } else {
    const MaeModel& enc = m.encoder;
    features.eeg = [this, &enc](const WindowInput& w, Rng&, bool) {
      return frozen_features(enc, w.session, w.window);
    };
  }
  m.result = train_supervised(m.classifier, trainable, training_windows(), features, cfg_.train, on_step);
  if (needs_encoder(variant)) {
    nn::ParamList enc = m.encoder.encoder_parameters();
    nn::set_trainable(enc, false);
  }
  return m;
}

std::vector<WindowPrediction> Experiment::predict(const TrainedModel& model, std::size_t session,
                                                  const std::function<void(std::size_t, const Matrix&)>& on_plan) const {
  const Session& s = sessions_.at(session);
  const std::size_t n = window_count(s.duration_s, cfg_.windows);
  if (n == 0) throw DataError("session '" + s.id + "' is shorter than one window");
  if (s.video.windows < n) {
    throw DataError("session '" + s.id + "' has video tokens for " + std::to_string(s.video.windows) + " of " +
                    std::to_string(n) + " windows");
  }
  std::vector<WindowPrediction> out;
  out.reserve(n);
  NoGradGuard guard;
  for (std::size_t w = 0; w < n; ++w) {
    const Tensor eeg_feat = needs_encoder(model.variant) ? frozen_features(model.encoder, session, w) : Tensor();
    const Tensor video = s.video.window_tensor(w);
    const double start = static_cast<double>(w) * cfg_.windows.stride_s;
    out.push_back({start, model.classifier.predict(eeg_feat, video)});
    if (on_plan && model.variant == ModelVariant::fusion) {
      Rng unused(0);
      const AdaptedTokens a = model.classifier.adapt(eeg_feat, video, unused, false);
      const Matrix c = Matrix::from_tensor(cosine_cost(a.eeg, a.video));
      on_plan(w, ipot(c, uniform_marginal(c.rows), uniform_marginal(c.cols), model.classifier.config().ipot).plan);
    }
  }
  return out;
}

SessionOutcome Experiment::outcome(std::size_t session, const std::vector<WindowPrediction>& predictions) const {
  const Session& s = sessions_.at(session);
  SessionOutcome o;
  o.session = s.id;
  o.grid = to_second_grid(predictions, cfg_.fusion.threshold, s.events, s.duration_s, cfg_.windows.length_s);
  o.predicted = postprocess_events(o.grid.predicted, cfg_.postprocess);
  o.truth = s.events;
  return o;
}

std::vector<SessionOutcome> Experiment::detect(const TrainedModel& model, const std::vector<std::size_t>& sessions) const {
  std::vector<SessionOutcome> out;
  for (std::size_t s : sessions) out.push_back(outcome(s, predict(model, s)));
  return out;
}

void save_mae(const fs::path& path, const MaeModel& model, const ExperimentConfig& cfg) {
  ensure_parent(path);
  Checkpoint ck;
  ck.meta_json = json{{"kind", "mae"}, {"fingerprint", config_fingerprint(cfg)}, {"seed", cfg.seed}}.dump();
  ck.tensors = model.parameters();
  save_checkpoint(path, ck);
}

MaeModel load_mae(const fs::path& path, const ExperimentConfig& cfg) {
  require_file(path, "pretrained encoder checkpoint", "run pretrain first or use --ablation no_pretrain");
  const Checkpoint ck = load_checkpoint(path);
  Rng rng(cfg.pretrain_seed());
  MaeModel model(cfg.mae, rng);
  nn::ParamList params = model.parameters();
  load_params(ck, params);
  return model;
}

void save_model(const fs::path& path, const TrainedModel& model, const ExperimentConfig& cfg) {
  ensure_parent(path);
  Checkpoint ck;
  ck.meta_json = json{{"kind", "classifier"},
                      {"variant", to_string(model.variant)},
                      {"ablation", ablation_string(model.ablation)},
                      {"fingerprint", config_fingerprint(cfg)},
                      {"seed", cfg.seed}}
                     .dump();
  ck.tensors = model.parameters();
  save_checkpoint(path, ck);
}

TrainedModel load_model(const fs::path& path, const Experiment& exp, ModelVariant variant, const Ablation& ablation) {
  require_file(path, "model checkpoint", "run train first");
  const Checkpoint ck = load_checkpoint(path);
  const json meta = json::parse(ck.meta_json);
  if (meta.value("variant", std::string()) != to_string(variant)) {
    throw ConfigError("checkpoint '" + path.string() + "' holds variant '" + meta.value("variant", std::string()) +
                      "', expected '" + to_string(variant) + "'");
  }
  TrainedModel m = exp.new_model(variant, ablation, nullptr);
  nn::ParamList params = m.parameters();
  load_params(ck, params);
  nn::set_trainable(params, false);
  return m;
}

void cmd_gen_data(const ExperimentConfig& cfg, std::ostream& log) {
  const auto paths = artifact_paths(cfg);
  const auto sessions = generate_synthetic_corpus(cfg.generator);
  save_corpus(paths.corpus, sessions, {cfg.seed, config_fingerprint(cfg)});
  ensure_parent(cfg.out_dir / "config.json");
  write_text(cfg.out_dir / "config.json", config_to_json(cfg));
  std::size_t events = 0;
  for (const auto& s : sessions) events += s.events.size();
  log << "wrote " << sessions.size() << " sessions (" << events << " seizures) to " << paths.corpus.string() << "\n";
}

void cmd_pretrain(const ExperimentConfig& cfg, std::ostream& log) {
  const auto paths = artifact_paths(cfg);
  require_file(manifest_path(paths.corpus), "corpus manifest", "run gen-data first");
  const Experiment exp = Experiment::from_disk(cfg);
  MaeModel model = exp.new_encoder();
  ensure_parent(paths.pretrain_log());
  std::ofstream jl(paths.pretrain_log(), std::ios::trunc);
  if (!jl) throw IoError("cannot write '" + paths.pretrain_log().string() + "'");
  const auto result = exp.pretrain(model, [&](std::size_t step, double lr, double loss) {
    jl << json{{"step", step}, {"lr", lr}, {"loss", loss}}.dump() << "\n";
  });
  jl << json{{"initial_eval_loss", result.initial_eval_loss}, {"final_eval_loss", result.final_eval_loss}}.dump()
     << "\n";
  save_mae(paths.mae_checkpoint(), model, cfg);
  log << "pretrained " << result.train_losses.size() << " steps; eval loss " << result.initial_eval_loss << " -> "
      << result.final_eval_loss << "; checkpoint " << paths.mae_checkpoint().string() << "\n";
}

void cmd_train(const ExperimentConfig& cfg, ModelVariant variant, const Ablation& ablation, std::ostream& log) {
  const auto paths = artifact_paths(cfg);
  require_file(manifest_path(paths.corpus), "corpus manifest", "run gen-data first");
  const Experiment exp = Experiment::from_disk(cfg);
  MaeModel pretrained;
  const bool use_pretrained = needs_encoder(variant) && !ablation.no_pretrain;
  if (use_pretrained) pretrained = load_mae(paths.mae_checkpoint(), cfg);
  const std::string name = model_name(variant, ablation);
  ensure_parent(paths.train_log(name));
  std::ofstream jl(paths.train_log(name), std::ios::trunc);
  if (!jl) throw IoError("cannot write '" + paths.train_log(name).string() + "'");
  const TrainedModel m = exp.train(variant, ablation, use_pretrained ? &pretrained : nullptr,
                                   [&](const TrainLogEntry& e) { jl << train_log_line(e) << "\n"; });
  save_model(paths.model_checkpoint(name), m, cfg);
  log << "trained " << name << " for " << m.result.log.size() << " steps; loss " << m.result.epoch_loss.front()
      << " -> " << m.result.epoch_loss.back() << "; checkpoint " << paths.model_checkpoint(name).string() << "\n";
}

void cmd_detect(const ExperimentConfig& cfg, ModelVariant variant, const Ablation& ablation,
                const std::vector<std::string>& session_ids, const fs::path& plan_dump, std::ostream& log) {
  const auto paths = artifact_paths(cfg);
  require_file(manifest_path(paths.corpus), "corpus manifest", "run gen-data first");
  const Experiment exp = Experiment::from_disk(cfg);
  const std::string name = model_name(variant, ablation);
  const TrainedModel m = load_model(paths.model_checkpoint(name), exp, variant, ablation);
  std::vector<std::size_t> sessions;
  if (session_ids.empty())
    sessions = exp.split().test;
  else
    for (const auto& id : session_ids) sessions.push_back(exp.session_index(id));
  if (!plan_dump.empty()) {
    ensure_parent(plan_dump);
    std::error_code ec;
    fs::remove(plan_dump, ec);
  }
  std::vector<PredictionRow> rows;
  for (std::size_t s : sessions) {
    const std::string& id = exp.sessions()[s].id;
    std::function<void(std::size_t, const Matrix&)> on_plan;
    if (!plan_dump.empty()) {
      on_plan = [&](std::size_t w, const Matrix& plan) {
        write_plan_csv(plan_dump, id, static_cast<double>(w) * cfg.windows.stride_s, plan, true);
      };
    }
    for (const auto& p : exp.predict(m, s, on_plan)) rows.push_back({id, p.start_s, p.probability});
  }
  ensure_parent(paths.predictions(name));
  write_predictions(paths.predictions(name), rows);
  log << "wrote " << rows.size() << " window predictions for " << sessions.size() << " session(s) to "
      << paths.predictions(name).string() << "\n";
}

void cmd_eval(const ExperimentConfig& cfg, ModelVariant variant, const Ablation& ablation, std::ostream& log) {
  const auto paths = artifact_paths(cfg);
  require_file(manifest_path(paths.corpus), "corpus manifest", "run gen-data first");
  const std::string name = model_name(variant, ablation);
  require_file(paths.predictions(name), "predictions file", "run detect first");
  const Experiment exp = Experiment::from_disk(cfg);
  const auto rows = read_predictions(paths.predictions(name));
  std::map<std::size_t, std::vector<WindowPrediction>> by_session;
  for (const auto& r : rows) by_session[exp.session_index(r.session)].push_back({r.start_s, r.probability});
  if (by_session.empty()) throw DataError("predictions file '" + paths.predictions(name).string() + "' is empty");
  std::vector<SessionOutcome> outcomes;
  for (const auto& [s, preds] : by_session) outcomes.push_back(exp.outcome(s, preds));
  const MetricsReport report = evaluate(outcomes);
  ReportMeta meta;
  meta.model = name;
  meta.split = to_string(cfg.split.mode);
  meta.seed = cfg.seed;
  meta.fingerprint = config_fingerprint(cfg);
  meta.sessions = outcomes.size();
  ensure_parent(paths.report_json(name));
  write_text(paths.report_json(name), report_json(report, meta));
  const std::string table = report_table({{name, report}});
  write_text(paths.report_table(name), table);
  write_event_audit(paths.event_audit(name), outcomes);
  log << table;
}

void cmd_psd(const ExperimentConfig& cfg, const std::string& source, std::ostream& log) {
  const auto paths = artifact_paths(cfg);
  EegRecording rec;
  std::string stem;
  const fs::path as_path(source);
  if (fs::exists(as_path) && fs::is_regular_file(as_path)) {
    rec = as_path.extension() == ".csv" ? read_eeg_csv(as_path, cfg.generator.sample_rate) : read_eeg(as_path);
    stem = as_path.stem().string();
  } else {
    require_file(manifest_path(paths.corpus), "corpus manifest", "run gen-data first or pass an EEG file");
    bool found = false;
    for (auto& s : load_corpus(paths.corpus)) {
      if (s.id == source) {
        rec = std::move(s.recording);
        found = true;
      }
    }
    if (!found) throw DataError("'" + source + "' is neither an EEG file nor a corpus session id");
    stem = source;
  }
  const PsdResult psd = welch_psd(preprocess(rec, cfg.preprocess), cfg.psd_segment_s, cfg.psd_overlap);
  ensure_parent(paths.psd(stem));
  write_psd_csv(paths.psd(stem), psd, rec.channel_names);
  std::size_t peak = 0;
  for (std::size_t k = 1; k < psd.frequencies.size(); ++k)
    if (psd.power[0][k] > psd.power[0][peak]) peak = k;
  log << "wrote PSD (" << psd.frequencies.size() << " bins) to " << paths.psd(stem).string() << "; peak "
      << psd.frequencies[peak] << " Hz\n";
}

}  // namespace evf
