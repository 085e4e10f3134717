#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <sstream>

#include "evf/config.hpp"
#include "evf/dsp.hpp"
#include "evf/errors.hpp"
#include "evf/eval.hpp"
#include "evf/ot.hpp"
#include "evf/pipeline.hpp"

namespace py = pybind11;
using namespace evf;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

EegRecording to_recording(const Array& signal, double sample_rate) {
  if (signal.ndim() != 2) throw DimensionError("signal must be [channels x samples]");
  EegRecording rec;
  rec.sample_rate = sample_rate;
  const auto c = static_cast<std::size_t>(signal.shape(0)), n = static_cast<std::size_t>(signal.shape(1));
  const double* p = signal.data();
  for (std::size_t i = 0; i < c; ++i) {
    rec.channel_names.push_back("ch" + std::to_string(i));
    rec.channels.emplace_back(p + i * n, p + (i + 1) * n);
  }
  return rec;
}

Array to_array(const std::vector<std::vector<double>>& rows) {
  const std::size_t c = rows.size(), n = rows.empty() ? 0 : rows.front().size();
  Array out({c, n});
  double* p = out.mutable_data();
  for (std::size_t i = 0; i < c; ++i) std::copy(rows[i].begin(), rows[i].end(), p + i * n);
  return out;
}

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw DimensionError("cost must be a 2-d array");
  return Matrix(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Matrix& m) {
  Array out({m.rows, m.cols});
  std::copy(m.values.begin(), m.values.end(), out.mutable_data());
  return out;
}

py::tuple plan_result(const TransportPlan& t) { return py::make_tuple(to_array(t.plan), t.ot_cost); }

std::vector<double> marginal_or_uniform(const std::optional<std::vector<double>>& m, std::size_t n) {
  return m ? *m : uniform_marginal(n);
}

py::object nullable(double v) { return std::isnan(v) ? py::none() : py::cast(v); }

py::dict metrics_dict(const MetricsReport& m) {
  py::dict d;
  d["balanced_accuracy"] = nullable(m.balanced_accuracy);
  d["sample_sensitivity"] = nullable(m.sensitivity);
  d["sample_specificity"] = nullable(m.specificity);
  d["event_sensitivity"] = nullable(m.event_sensitivity);
  d["event_far_per_hour"] = m.event_far;
  d["hours"] = m.hours;
  d["tp"] = m.samples.tp;
  d["tn"] = m.samples.tn;
  d["fp"] = m.samples.fp;
  d["fn"] = m.samples.fn;
  d["gt_events"] = m.events.gt_events;
  d["detected_events"] = m.events.detected;
  d["false_events"] = m.events.false_pred;
  return d;
}

ExperimentConfig make_config(const std::string& profile, const std::optional<std::string>& config_json,
                             const std::optional<std::string>& out, std::optional<std::uint64_t> seed,
                             const std::vector<std::string>& overrides) {
  ExperimentConfig cfg = config_json ? config_from_json(*config_json) : profile_config(profile);
  if (seed) cfg.seed = *seed;
  if (out) cfg.out_dir = *out;
  return apply_overrides(cfg, overrides);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Video-EEG fusion seizure detection core";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  m.def(
      "preprocess",
      [](const Array& signal, double sample_rate, double low_hz, double high_hz, double notch_hz, double notch_q,
         double median_window_s) {
        PreprocessConfig pc;
        pc.bandpass_low_hz = low_hz;
        pc.bandpass_high_hz = high_hz;
        pc.notch_hz = notch_hz;
        pc.notch_q = notch_q;
        pc.median_window_s = median_window_s;
        return to_array(preprocess(to_recording(signal, sample_rate), pc).channels);
      },
      py::arg("signal"), py::arg("sample_rate"), py::arg("low_hz") = 1.0, py::arg("high_hz") = 50.0,
      py::arg("notch_hz") = 50.0, py::arg("notch_q") = 30.0, py::arg("median_window_s") = 1.0,
      "Band-pass, notch and median-baseline removal of a [channels x samples] array.");

  m.def(
      "welch_psd",
      [](const Array& signal, double sample_rate, double segment_s, double overlap) {
        const auto r = welch_psd(to_recording(signal, sample_rate), segment_s, overlap);
        return py::make_tuple(py::array_t<double>(r.frequencies.size(), r.frequencies.data()), to_array(r.power));
      },
      py::arg("signal"), py::arg("sample_rate"), py::arg("segment_s") = 2.0, py::arg("overlap") = 0.5,
      "Welch power spectrum: (frequencies, power[channels x bins]).");

  m.def(
      "cosine_cost", [](const Array& eeg, const Array& video) {
        return to_array(cosine_cost(to_matrix(eeg), to_matrix(video)).values);
      },
      py::arg("eeg"), py::arg("video"));

  m.def(
      "ipot",
      [](const Array& cost, std::optional<std::vector<double>> a, std::optional<std::vector<double>> b,
         std::size_t outer_iters, double beta) {
        const Matrix c = to_matrix(cost);
        IpotParams p;
        p.outer_iters = outer_iters;
        p.beta = beta;
        return plan_result(ipot(c, marginal_or_uniform(a, c.rows), marginal_or_uniform(b, c.cols), p));
      },
      py::arg("cost"), py::arg("a") = py::none(), py::arg("b") = py::none(), py::arg("outer_iters") = 50,
      py::arg("beta") = 0.5, "Proximal-point OT plan: (plan, cost). Marginals default to uniform.");

  m.def(
      "exact_ot",
      [](const Array& cost, std::optional<std::vector<double>> a, std::optional<std::vector<double>> b) {
        const Matrix c = to_matrix(cost);
        return plan_result(exact_ot_oracle(c, marginal_or_uniform(a, c.rows), marginal_or_uniform(b, c.cols)));
      },
      py::arg("cost"), py::arg("a") = py::none(), py::arg("b") = py::none(),
      "Exact transportation LP for problems with at most 16 cells.");

  m.def(
      "postprocess_events",
      [](const std::vector<std::uint8_t>& grid, double merge_gap_s, double min_duration_s) {
        std::vector<std::pair<double, double>> out;
        for (const auto& e : postprocess_events(grid, {merge_gap_s, min_duration_s})) out.emplace_back(e.onset_s, e.offset_s);
        return out;
      },
      py::arg("grid"), py::arg("merge_gap_s") = 5.0, py::arg("min_duration_s") = 10.0,
      "Per-second binary grid to (onset, offset) events.");

  m.def(
      "evaluate_grids",
      [](const std::vector<std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>>>& sessions) {
        std::vector<SessionOutcome> outcomes;
        for (std::size_t i = 0; i < sessions.size(); ++i) {
          const auto& [pred, truth] = sessions[i];
          if (pred.size() != truth.size()) throw DimensionError("prediction and truth grids differ in length");
          SessionOutcome o;
          o.session = "s" + std::to_string(i);
          o.grid = {pred, truth, static_cast<double>(pred.size())};
          o.predicted = postprocess_events(pred);
          o.truth = grid_runs(truth);
          outcomes.push_back(std::move(o));
        }
        return metrics_dict(evaluate(outcomes));
      },
      py::arg("sessions"), "Pooled metrics over (predicted, truth) per-second grids.");

  m.def("profile_names", &profile_names);
  m.def(
      "config_json",
      [](const std::string& profile, std::optional<std::string> out, std::optional<std::uint64_t> seed,
         const std::vector<std::string>& overrides) {
        return config_to_json(make_config(profile, std::nullopt, out, seed, overrides));
      },
      py::arg("profile") = "desk", py::arg("out") = py::none(), py::arg("seed") = py::none(),
      py::arg("overrides") = std::vector<std::string>{});
  m.def(
      "config_fingerprint", [](const std::string& json) { return config_fingerprint(config_from_json(json)); },
      py::arg("config_json"));

  m.def(
      "run",
      [](const std::string& command, const std::string& profile, std::optional<std::string> config_json,
         std::optional<std::string> out, std::optional<std::uint64_t> seed, const std::vector<std::string>& overrides,
         const std::string& model, const std::string& ablation, const std::vector<std::string>& sessions,
         const std::string& source) {
        const ExperimentConfig cfg = make_config(profile, config_json, out, seed, overrides);
        const ModelVariant variant = parse_variant(model);
        const Ablation abl = parse_ablation(ablation);
        std::ostringstream log;
        {
          py::gil_scoped_release release;
          if (command == "gen-data") cmd_gen_data(cfg, log);
          else if (command == "pretrain") cmd_pretrain(cfg, log);
          else if (command == "train") cmd_train(cfg, variant, abl, log);
          else if (command == "detect") cmd_detect(cfg, variant, abl, sessions, {}, log);
          else if (command == "eval") cmd_eval(cfg, variant, abl, log);
          else if (command == "psd") cmd_psd(cfg, source, log);
          else throw ConfigError("unknown command '" + command + "'");
        }
        return log.str();
      },
      py::arg("command"), py::arg("profile") = "desk", py::arg("config_json") = py::none(), py::arg("out") = py::none(),
      py::arg("seed") = py::none(), py::arg("overrides") = std::vector<std::string>{}, py::arg("model") = "fusion",
      py::arg("ablation") = "", py::arg("sessions") = std::vector<std::string>{}, py::arg("source") = "",
      "Runs one pipeline command and returns its log.");
}
