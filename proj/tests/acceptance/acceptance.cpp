// Acceptance runner: one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "evf/dsp.hpp"
#include "evf/eval.hpp"
#include "evf/io.hpp"
#include "evf/ot.hpp"
#include "evf/pipeline.hpp"
#include "support.hpp"

using namespace evf;
using evf::testing::grad_check;
using evf::testing::project;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

Tensor rand_t(Shape s, std::uint64_t seed) {
  Rng rng(seed);
  return Tensor::randn(std::move(s), 1.0, rng);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

// 1. Gradients of the miniature models and of every op.
Outcome gradients() {
  double worst_op = 0.0;
  {
    Tensor a = rand_t({3, 4}, 11), b = rand_t({3, 4}, 12), c = rand_t({4, 5}, 13);
    Tensor v = rand_t({4}, 14), g = rand_t({4}, 15);
    Tensor x3 = rand_t({2, 3, 12}, 16), k3 = rand_t({4, 3, 5}, 17);
    Tensor tok = rand_t({9, 4}, 18), dw = rand_t({5, 4}, 19), sig = rand_t({2, 16}, 20);
    Tensor e = rand_t({4, 6}, 21), vv = rand_t({3, 6}, 22);
    const std::vector<std::size_t> idx{2, 0, 2, 1};
    const std::vector<int> labels{1, 0, 1};
    const std::vector<std::pair<std::function<Tensor()>, std::vector<Tensor>>> cases = {
        {[&] { return project(add(a, b)); }, {a, b}},
        {[&] { return project(sub(a, b)); }, {a, b}},
        {[&] { return project(mul(a, b)); }, {a, b}},
        {[&] { return project(affine(a, 1.7, -0.3)); }, {a}},
        {[&] { return project(square(a)); }, {a}},
        {[&] { return project(add_bias(a, v)); }, {a, v}},
        {[&] { return project(gelu(a)); }, {a}},
        {[&] {
           Rng r(3);
           return project(dropout(a, 0.4, r, true));
         }, {a}},
        {[&] { return mean(square(a)); }, {a}},
        {[&] { return project(mean_rows(a)); }, {a}},
        {[&] { return project(matmul(a, c)); }, {a, c}},
        {[&] { return project(matmul_nt(a, b)); }, {a, b}},
        {[&] { return project(transpose(a)); }, {a}},
        {[&] { return project(softmax(a, -1)); }, {a}},
        {[&] { return project(softmax(a, 0)); }, {a}},
        {[&] { return project(layer_norm(a, g, v)); }, {a, g, v}},
        {[&] { return cross_entropy(slice_cols(a, 0, 2), labels); }, {a}},
        {[&] { return project(row_normalize(a)); }, {a}},
        {[&] { return project(reshape(a, {2, 6})); }, {a}},
        {[&] { return project(concat({a, b}, 0)); }, {a, b}},
        {[&] { return project(concat({a, b}, 1)); }, {a, b}},
        {[&] { return project(gather_rows(a, idx)); }, {a}},
        {[&] { return project(slice_cols(a, 1, 2)); }, {a}},
        {[&] { return project(slice_rows(a, 1, 2)); }, {a}},
        {[&] { return project(conv1d(x3, k3, 2, 2)); }, {x3, k3}},
        {[&] { return project(depthwise_conv1d(tok, dw)); }, {tok, dw}},
        {[&] { return project(rfft_magnitude(sig)); }, {sig}},
        {[&] { return project(cosine_cost(e, vv)); }, {e, vv}},
    };
    for (const auto& [f, params] : cases) worst_op = std::max(worst_op, grad_check(f, params).worst);
  }

  Rng rng(10);
  const MaeConfig mcfg = evf::testing::mini_mae_config();
  const MaeModel mae(mcfg, rng);
  const PatchGrid grid = evf::testing::random_grid(mcfg, 11);
  const MaskPlan plan = make_mask(mcfg.channels, mcfg.num_patches(), mcfg.mask_ratio, rng);
  const auto mae_gc = grad_check([&] { return mae.forward(grid, plan, rng, false).loss; },
                                 evf::testing::tensors_of(mae.parameters()));

  // The transport plan is a constant in backprop, so the alignment term is
  // covered by the op list and the plan-weighted cost check below.
  FusionConfig fcfg = evf::testing::mini_fusion_config();
  fcfg.lambda_ot = 0.0;
  const FusionModel fusion(fcfg, 6, 5, rng);
  const Tensor fe = Tensor::randn({8, 6}, 1.0, rng), fv = Tensor::randn({8, 5}, 1.0, rng);
  const std::vector<int> label{1};
  const auto fusion_gc = grad_check(
      [&] {
        const auto out = fusion.forward(fe, fv, rng, false);
        return total_loss(out.logits, label, out.ot);
      },
      evf::testing::tensors_of(fusion.parameters()));

  Tensor cost = Tensor::uniform({3, 4}, 1.0, rng, true);
  const auto tp = ipot(Matrix::from_tensor(cost), uniform_marginal(3), uniform_marginal(4));
  backward(ot_loss(tp.plan, cost, 0.5));
  double ot_grad = 0.0;
  for (std::size_t i = 0; i < 12; ++i) ot_grad = std::max(ot_grad, std::abs(cost.grad()[i] - 0.5 * tp.plan.values[i]));

  const bool full = mae_gc.checked == nn::count_scalars(mae.parameters()) &&
                    fusion_gc.checked == nn::count_scalars(fusion.parameters());
  return {full && mae_gc.worst < 1e-3 && fusion_gc.worst < 1e-3 && worst_op < 1e-4 && ot_grad < 1e-15,
          fmt("mae %.2e (%zu scalars), fusion %.2e (%zu scalars), worst op %.2e", mae_gc.worst, mae_gc.checked,
              fusion_gc.worst, fusion_gc.checked, worst_op)};
}

// 2. IPOT against the exact transportation LP.
Outcome ot_oracle() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> dim(1, 4);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  double worst_gap = 0.0, worst_feas = 0.0;
  IpotParams p;
  p.outer_iters = 200;
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = dim(rng), m = dim(rng);
    Matrix c(n, m);
    for (double& v : c.values) v = u(rng);
    const auto a = uniform_marginal(n), b = uniform_marginal(m);
    const auto ip = ipot(c, a, b, p);
    const auto ex = exact_ot_oracle(c, a, b);
    worst_gap = std::max(worst_gap, std::abs(ip.ot_cost - ex.ot_cost));
    worst_feas = std::max(worst_feas, marginal_error(ip.plan, a, b));
  }
  return {worst_gap < 1e-3 && worst_feas < 1e-6,
          fmt("max |ipot - lp| %.2e, max marginal error %.2e", worst_gap, worst_feas)};
}

// 3. ot_loss against lambda * sum_ij C_ij T_ij.
Outcome ot_formula() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 1 + t % 6, m = 1 + (t * 7) % 5;
    Matrix c(n, m);
    for (double& v : c.values) v = u(rng);
    const auto plan = ipot(c, uniform_marginal(n), uniform_marginal(m));
    const double lambda = 0.1 + 0.05 * t;
    double loop = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) loop += c(i, j) * plan.plan(i, j);
    loop *= lambda;
    worst = std::max(worst, std::abs(ot_loss(plan, c, lambda) - loop));
    worst = std::max(worst, std::abs(ot_loss(plan.plan, c.to_tensor(), lambda).item() - loop));
  }
  return {worst <= 1e-12, fmt("max deviation %.2e", worst)};
}

// Steady-state amplitude of a unit tone after `f`, measured by a single-bin
// DFT over the middle of a 60 s record.
double tone_gain_db(const std::function<EegRecording(const EegRecording&)>& f, double hz, double fs) {
  EegRecording rec;
  rec.sample_rate = fs;
  rec.channel_names = {"t"};
  const auto n = static_cast<std::size_t>(60.0 * fs);
  rec.channels.assign(1, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    rec.channels[0][i] = std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / fs);
  const auto y = f(rec).channels[0];
  const std::size_t lo = n / 4;
  const auto periods = static_cast<std::size_t>(std::floor(30.0 * hz));
  const std::size_t len = periods > 0 ? static_cast<std::size_t>(std::llround(static_cast<double>(periods) * fs / hz)) : n / 2;
  std::complex<double> acc = 0.0;
  for (std::size_t i = lo; i < lo + len; ++i)
    acc += y[i] * std::polar(1.0, -2.0 * std::numbers::pi * hz * static_cast<double>(i) / fs);
  return 20.0 * std::log10(2.0 * std::abs(acc) / static_cast<double>(len));
}

// 4. Filter responses at the generator sample rate.
Outcome dsp_response() {
  const double fs = GeneratorSpec{}.sample_rate;
  const auto notch_f = [](const EegRecording& r) { return notch50(r); };
  const auto band_f = [](const EegRecording& r) { return bandpass(r); };
  const double notch50_db = tone_gain_db(notch_f, 50.0, fs);
  const double pass10_db = tone_gain_db(band_f, 10.0, fs);
  const double chain10_db = tone_gain_db([](const EegRecording& r) { return notch50(bandpass(r)); }, 10.0, fs);
  const double drift_db = tone_gain_db(band_f, 0.2, fs);
  return {notch50_db <= -20.0 && std::abs(pass10_db) <= 1.0 && std::abs(chain10_db) <= 1.0 && drift_db <= -20.0,
          fmt("notch @50 Hz %.1f dB, band-pass @10 Hz %.3f dB (with notch %.3f dB), band-pass @0.2 Hz %.1f dB",
              notch50_db, pass10_db, chain10_db, drift_db)};
}

// 5. Desk-scale pre-training plus the masking properties.
Outcome mae_sanity() {
  ExperimentConfig cfg = profile_config("desk");
  cfg.pretrain.steps = 200;
  cfg.pretrain_epochs = 0;
  const Experiment exp(cfg, generate_synthetic_corpus(cfg.generator));
  MaeModel model = exp.new_encoder();
  const auto res = exp.pretrain(model);
  const double ratio = res.final_eval_loss / res.initial_eval_loss;
  double head = 0.0, tail = 0.0;
  const std::size_t k = std::min<std::size_t>(10, res.train_losses.size());
  for (std::size_t i = 0; i < k; ++i) {
    head += res.train_losses[i] / static_cast<double>(k);
    tail += res.train_losses[res.train_losses.size() - 1 - i] / static_cast<double>(k);
  }

  Rng rng(5);
  const PatchGrid grid = window_grid(exp.eeg(0), 0.0, cfg.mae);
  bool exact_ratio = true, masked_only = true;
  for (int t = 0; t < 20; ++t) {
    const MaskPlan plan = make_mask(cfg.mae.channels, cfg.mae.num_patches(), cfg.mae.mask_ratio, rng);
    for (std::size_t c = 0; c < plan.channels; ++c) {
      std::size_t m = 0;
      for (std::size_t n = 0; n < plan.patches; ++n) m += plan.masked[c * plan.patches + n];
      exact_ratio = exact_ratio && m * 4 == plan.patches * 3;
    }
    const auto f = model.forward(grid, plan, rng, false);
    PatchGrid visible_changed = grid, masked_changed = grid;
    for (std::size_t v : plan.visible_ids())
      for (std::size_t i = 0; i < cfg.mae.patch_len; ++i) visible_changed.values[v * cfg.mae.patch_len + i] += 5.0;
    for (std::size_t i = 0; i < cfg.mae.patch_len; ++i)
      masked_changed.values[plan.masked_ids().front() * cfg.mae.patch_len + i] += 5.0;
    const auto ids = plan.masked_ids();
    masked_only = masked_only &&
                  mae_loss(gather_rows(visible_changed.rows(), ids), f.reconstruction).item() == f.loss.item() &&
                  mae_loss(gather_rows(masked_changed.rows(), ids), f.reconstruction).item() != f.loss.item();
  }
  return {ratio < 0.5 && exact_ratio && masked_only,
          fmt("eval loss %.4g -> %.4g (ratio %.3f, need < 0.5), train loss first/last 10 steps %.4g / %.4g; "
              "masked-only loss %s; 0.75 per channel %s",
              res.initial_eval_loss, res.final_eval_loss, ratio, head, tail, masked_only ? "yes" : "no",
              exact_ratio ? "yes" : "no")};
}

std::vector<std::uint8_t> grid_of(std::size_t n, const EventList& runs) {
  std::vector<std::uint8_t> g(n, 0);
  for (const auto& r : runs)
    for (auto t = static_cast<std::size_t>(r.onset_s); t < static_cast<std::size_t>(r.offset_s); ++t) g[t] = 1;
  return g;
}

// 6. Post-processing boundary examples.
Outcome golden_events() {
  const bool merge = postprocess_events(grid_of(60, {{10, 20}, {23, 35}})) == EventList{{10, 35}};
  const bool drop = postprocess_events(grid_of(60, {{0, 8}})).empty();
  const bool no_merge = postprocess_events(grid_of(60, {{0, 6}, {11, 18}})).empty();
  return {merge && drop && no_merge,
          fmt("merge at gap 3 %s, drop at 8 s %s, no merge at gap 5 %s", merge ? "ok" : "wrong", drop ? "ok" : "wrong",
              no_merge ? "ok" : "wrong")};
}

// Per-second reference: fill gaps shorter than 5 s, then keep runs of at
// least 10 s.
EventList oracle_events(std::vector<std::uint8_t> g) {
  const int n = static_cast<int>(g.size());
  int last_end = -1;
  for (int t = 0; t < n; ++t) {
    if (!g[t]) continue;
    if (last_end >= 0 && t - last_end < 5)
      for (int k = last_end; k < t; ++k) g[k] = 1;
    int e = t;
    while (e < n && g[e]) ++e;
    last_end = e;
    t = e - 1;
  }
  EventList out;
  for (int t = 0; t < n;) {
    int e = t;
    while (e < n && g[e]) ++e;
    if (e - t >= 10) out.push_back({static_cast<double>(t), static_cast<double>(e)});
    t = e > t ? e : t + 1;
  }
  return out;
}

// 7. Metrics against brute-force counting.
Outcome metrics_oracle() {
  std::mt19937_64 rng(77);
  std::bernoulli_distribution flip(0.06);
  std::uniform_int_distribution<int> nsess(1, 5), len(60, 900);
  int mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<SessionOutcome> outcomes;
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0, gt = 0, det = 0, fpe = 0;
    double seconds = 0.0;
    const int ns = nsess(rng);
    for (int s = 0; s < ns; ++s) {
      const auto n = static_cast<std::size_t>(len(rng));
      SessionOutcome o;
      o.session = "s" + std::to_string(s);
      o.grid.duration_s = static_cast<double>(n);
      o.grid.predicted.resize(n);
      o.grid.truth.resize(n);
      std::uint8_t ps = 0, ts = 0;
      for (std::size_t t = 0; t < n; ++t) {
        if (flip(rng)) ps ^= 1;
        if (flip(rng)) ts ^= 1;
        o.grid.predicted[t] = ps;
        o.grid.truth[t] = ts;
      }
      o.predicted = postprocess_events(o.grid.predicted);
      if (o.predicted != oracle_events(o.grid.predicted)) ++mismatches;
      o.truth = grid_runs(o.grid.truth);
      for (std::size_t t = 0; t < n; ++t) {
        const bool p = o.grid.predicted[t], y = o.grid.truth[t];
        tp += p && y;
        tn += !p && !y;
        fp += p && !y;
        fn += !p && y;
      }
      std::vector<std::uint8_t> pred_sec = grid_of(n, o.predicted);
      for (const auto& g : o.truth) {
        ++gt;
        bool hit = false;
        for (auto t = static_cast<std::size_t>(g.onset_s); t < static_cast<std::size_t>(g.offset_s); ++t)
          hit = hit || pred_sec[t];
        det += hit;
      }
      for (const auto& p : o.predicted) {
        bool hit = false;
        for (auto t = static_cast<std::size_t>(p.onset_s); t < static_cast<std::size_t>(p.offset_s); ++t)
          hit = hit || o.grid.truth[t];
        fpe += !hit;
      }
      seconds += static_cast<double>(n);
      outcomes.push_back(std::move(o));
    }
    const auto m = evaluate(outcomes);
    const double sens = static_cast<double>(tp) / static_cast<double>(tp + fn);
    const double spec = static_cast<double>(tn) / static_cast<double>(tn + fp);
    const double hours = seconds / 3600.0;
    bool ok = m.samples.tp == tp && m.samples.tn == tn && m.samples.fp == fp && m.samples.fn == fn &&
              m.events.gt_events == gt && m.events.detected == det && m.events.false_pred == fpe &&
              m.hours == hours && m.event_far == static_cast<double>(fpe) / hours;
    if (tp + fn) ok = ok && m.sensitivity == sens;
    if (tn + fp) ok = ok && m.specificity == spec;
    if (tp + fn && tn + fp) ok = ok && m.balanced_accuracy == (sens + spec) / 2.0;
    if (gt) ok = ok && m.event_sensitivity == static_cast<double>(det) / static_cast<double>(gt);
    if (!ok) ++mismatches;
  }
  return {mismatches == 0, fmt("%d of 100 grids disagree", mismatches)};
}

struct DeskResults {
  std::map<std::string, MetricsReport> reports;
  std::map<std::string, double> seconds;
  double artifact_seizure_share = 0.0;
  double motion_share = 0.0;
};

DeskResults run_desk() {
  const ExperimentConfig cfg = profile_config("desk");
  const Experiment exp(cfg, generate_synthetic_corpus(cfg.generator));
  DeskResults out;
  std::size_t seizures = 0, with_artifact = 0;
  double interictal = 0.0, motion = 0.0;
  for (const auto& s : exp.sessions()) {
    seizures += s.events.size();
    for (bool a : s.truth.seizure_artifact) with_artifact += a;
    double ictal = 0.0;
    for (const auto& e : s.events) ictal += e.offset_s - e.onset_s;
    interictal += s.duration_s - ictal;
    for (const auto& m : s.truth.benign_motion) motion += m.offset_s - m.onset_s;
  }
  out.artifact_seizure_share = seizures ? static_cast<double>(with_artifact) / static_cast<double>(seizures) : 0.0;
  out.motion_share = motion / interictal;

  MaeModel encoder = exp.new_encoder();
  exp.pretrain(encoder);
  const std::vector<std::pair<ModelVariant, Ablation>> runs = {
      {ModelVariant::fusion, {}}, {ModelVariant::eeg_only, {}}, {ModelVariant::video_only, {}},
      {ModelVariant::fusion, {true, false}}};
  for (const auto& [variant, ablation] : runs) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto model = exp.train(variant, ablation, &encoder);
    const auto name = model_name(variant, ablation);
    out.reports[name] = evaluate(exp.detect(model, exp.split().test));
    out.seconds[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  return out;
}

// 8. Fusion against the single-modality variants.
Outcome fusion_claim(const DeskResults& d) {
  const auto& f = d.reports.at("fusion");
  const auto& e = d.reports.at("eeg_only");
  const auto& v = d.reports.at("video_only");
  std::ostringstream s;
  s << fmt("corpus: %.0f%% of seizures with artifacts, %.1f%% of interictal time with motion; ",
           100.0 * d.artifact_seizure_share, 100.0 * d.motion_share);
  for (const auto& [name, r] : d.reports)
    s << fmt("%s BA %.4f ev-sens %.3f FAR %.3f (%.0f s); ", name.c_str(), r.balanced_accuracy, r.event_sensitivity,
             r.event_far, d.seconds.at(name));
  return {f.event_sensitivity == 1.0 && f.event_far < e.event_far && f.event_far < v.event_far &&
              f.balanced_accuracy >= 0.95,
          s.str()};
}

// 9. Removing the alignment loss must not lower the false alarm rate.
Outcome ablation(const DeskResults& d) {
  const auto& f = d.reports.at("fusion");
  const auto& n = d.reports.at("fusion_no_ot");
  return {n.event_far >= f.event_far && n.event_sensitivity == 1.0 && f.event_sensitivity == 1.0,
          fmt("no_ot FAR %.3f vs fusion %.3f, event sensitivity %.3f vs %.3f", n.event_far, f.event_far,
              n.event_sensitivity, f.event_sensitivity)};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_text(e.path());
  return files;
}

// 10. Two complete runs of the command pipeline produce identical bytes.
Outcome determinism(const fs::path& work) {
  ExperimentConfig cfg = profile_config("smoke");
  cfg.out_dir = work / "determinism";
  std::vector<std::map<std::string, std::string>> runs;
  for (int r = 0; r < 2; ++r) {
    fs::remove_all(cfg.out_dir);
    std::ostringstream log;
    cmd_gen_data(cfg, log);
    cmd_pretrain(cfg, log);
    for (const auto& [variant, ablation] : std::vector<std::pair<ModelVariant, Ablation>>{
             {ModelVariant::fusion, {}}, {ModelVariant::eeg_only, {}}, {ModelVariant::fusion, {true, false}}}) {
      cmd_train(cfg, variant, ablation, log);
      cmd_detect(cfg, variant, ablation, {}, {}, log);
      cmd_eval(cfg, variant, ablation, log);
    }
    runs.push_back(snapshot(cfg.out_dir));
  }
  fs::remove_all(cfg.out_dir);
  std::size_t differing = 0;
  std::set<std::string> names;
  for (const auto& [k, v] : runs[0]) names.insert(k);
  for (const auto& [k, v] : runs[1]) names.insert(k);
  std::string first;
  for (const auto& n : names) {
    const auto a = runs[0].find(n), b = runs[1].find(n);
    if (a == runs[0].end() || b == runs[1].end() || a->second != b->second) {
      ++differing;
      if (first.empty()) first = n;
    }
  }
  return {differing == 0 && !names.empty(),
          fmt("%zu files compared, %zu differ%s%s", names.size(), differing, first.empty() ? "" : ", first: ",
              first.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  fs::path work = fs::temp_directory_path() / "evf_acceptance";
  std::vector<int> only;
  app.add_option("--work", work, "Scratch directory");
  app.add_option("--only", only, "Criteria to run (default all)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  const auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };
  std::unique_ptr<DeskResults> desk;
  const auto desk_results = [&]() -> const DeskResults& {
    if (!desk) desk = std::make_unique<DeskResults>(run_desk());
    return *desk;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradients},
      {"OT oracle equivalence", ot_oracle},
      {"OT loss formula", ot_formula},
      {"DSP frequency response", dsp_response},
      {"MAE pre-training sanity", mae_sanity},
      {"event post-processing golden tests", golden_events},
      {"metrics oracle", metrics_oracle},
      {"fusion beats single modalities", [&] { return fusion_claim(desk_results()); }},
      {"ablation directionality", [&] { return ablation(desk_results()); }},
      {"determinism", [&] { return determinism(work); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!wanted(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first << ", "
              << fmt("%.1f s", secs) << "): " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
