#include "evf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "json.hpp"

#include "evf/errors.hpp"

namespace evf {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool overlaps(const SeizureEvent& a, const SeizureEvent& b) { return a.onset_s < b.offset_s && b.onset_s < a.offset_s; }

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? kNaN : static_cast<double>(num) / static_cast<double>(den);
}

nlohmann::json num(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

double get_num(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  return v.is_null() ? kNaN : v.get<double>();
}

}  // namespace

SecondGrid to_second_grid(const std::vector<WindowPrediction>& predictions, double threshold,
                          const EventList& truth, double duration_s, double window_s) {
  const auto n = static_cast<std::size_t>(std::floor(duration_s + 1e-9));
  SecondGrid g;
  g.duration_s = duration_s;
  g.predicted.assign(n, 0);
  g.truth.assign(n, 0);
  std::vector<std::uint8_t> covered(n, 0);
  for (const auto& p : predictions) {
    const double first = std::ceil(p.start_s - 1e-9);
    const double last = std::floor(p.start_s + window_s + 1e-9) - 1.0;
    for (double t = std::max(first, 0.0); t <= last && t < static_cast<double>(n); t += 1.0) {
      const auto k = static_cast<std::size_t>(t);
      covered[k] = 1;
      if (p.probability >= threshold) g.predicted[k] = 1;
    }
  }
  for (std::size_t t = 0; t < n; ++t) {
    if (!covered[t]) throw DataError("second grid: second " + std::to_string(t) + " is not covered by any window");
  }
  for (const auto& e : truth) {
    for (std::size_t t = 0; t < n; ++t) {
      const auto ts = static_cast<double>(t);
      if (e.onset_s <= ts && ts < e.offset_s) g.truth[t] = 1;
    }
  }
  return g;
}

EventList grid_runs(const std::vector<std::uint8_t>& grid) {
  EventList runs;
  std::size_t t = 0;
  while (t < grid.size()) {
    if (!grid[t]) {
      ++t;
      continue;
    }
    std::size_t end = t;
    while (end < grid.size() && grid[end]) ++end;
    runs.push_back({static_cast<double>(t), static_cast<double>(end)});
    t = end;
  }
  return runs;
}

EventList postprocess_events(const EventList& candidates, const PostprocessParams& params) {
  EventList merged;
  for (const auto& e : candidates) {
    if (!merged.empty() && e.onset_s - merged.back().offset_s < params.merge_gap_s) {
      merged.back().offset_s = std::max(merged.back().offset_s, e.offset_s);
    } else {
      merged.push_back(e);
    }
  }
  EventList out;
  for (const auto& e : merged)
    if (e.duration() >= params.min_duration_s) out.push_back(e);
  return out;
}

EventList postprocess_events(const std::vector<std::uint8_t>& grid, const PostprocessParams& params) {
  return postprocess_events(grid_runs(grid), params);
}

void accumulate_samples(const SecondGrid& grid, SampleCounts& c) {
  if (grid.predicted.size() != grid.truth.size()) throw DimensionError("sample metrics: grid lengths differ");
  for (std::size_t t = 0; t < grid.truth.size(); ++t) {
    const bool p = grid.predicted[t], g = grid.truth[t];
    if (p && g) ++c.tp;
    else if (!p && !g) ++c.tn;
    else if (p) ++c.fp;
    else ++c.fn;
  }
}

void finalize_samples(MetricsReport& r) {
  r.sensitivity = ratio(r.samples.tp, r.samples.tp + r.samples.fn);
  r.specificity = ratio(r.samples.tn, r.samples.tn + r.samples.fp);
  r.balanced_accuracy = (r.sensitivity + r.specificity) / 2.0;
}

MetricsReport sample_metrics(const std::vector<SecondGrid>& grids) {
  if (grids.empty()) throw ContractError("sample metrics: no grids");
  MetricsReport r;
  for (const auto& g : grids) accumulate_samples(g, r.samples);
  finalize_samples(r);
  return r;
}

void accumulate_events(const EventList& predicted, const EventList& truth, EventCounts& c) {
  c.gt_events += truth.size();
  c.pred_events += predicted.size();
  for (const auto& g : truth) {
    if (std::any_of(predicted.begin(), predicted.end(), [&](const SeizureEvent& p) { return overlaps(p, g); })) {
      ++c.detected;
    }
  }
  for (const auto& p : predicted) {
    if (std::any_of(truth.begin(), truth.end(), [&](const SeizureEvent& g) { return overlaps(p, g); }))
      ++c.true_pred;
    else
      ++c.false_pred;
  }
}

void finalize_events(MetricsReport& r) {
  if (!(r.hours > 0.0)) throw ContractError("event metrics: total recorded hours must be positive");
  r.event_sensitivity = ratio(r.events.detected, r.events.gt_events);
  r.event_far = static_cast<double>(r.events.false_pred) / r.hours;
}

MetricsReport event_metrics(const EventList& predicted, const EventList& truth, double hours) {
  MetricsReport r;
  r.hours = hours;
  accumulate_events(predicted, truth, r.events);
  finalize_events(r);
  return r;
}

MetricsReport evaluate(const std::vector<SessionOutcome>& sessions) {
  if (sessions.empty()) throw ContractError("evaluate: no sessions");
  MetricsReport r;
  double seconds = 0.0;
  for (const auto& s : sessions) {
    accumulate_samples(s.grid, r.samples);
    accumulate_events(s.predicted, s.truth, r.events);
    seconds += s.grid.duration_s;
  }
  r.hours = seconds / 3600.0;
  finalize_samples(r);
  finalize_events(r);
  return r;
}

std::string report_json(const MetricsReport& m, const ReportMeta& meta) {
  nlohmann::json j;
  j["model"] = meta.model;
  j["split"] = meta.split;
  j["seed"] = meta.seed;
  j["fingerprint"] = meta.fingerprint;
  j["sessions"] = meta.sessions;
  j["balanced_accuracy"] = num(m.balanced_accuracy);
  j["sample_sensitivity"] = num(m.sensitivity);
  j["sample_specificity"] = num(m.specificity);
  j["event_sensitivity"] = num(m.event_sensitivity);
  j["event_far_per_hour"] = num(m.event_far);
  j["hours"] = m.hours;
  j["counts"] = {{"tp", m.samples.tp},
                 {"tn", m.samples.tn},
                 {"fp", m.samples.fp},
                 {"fn", m.samples.fn},
                 {"gt_events", m.events.gt_events},
                 {"detected_events", m.events.detected},
                 {"predicted_events", m.events.pred_events},
                 {"true_predicted_events", m.events.true_pred},
                 {"false_predicted_events", m.events.false_pred}};
  return j.dump(2) + "\n";
}

MetricsReport report_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  MetricsReport m;
  m.balanced_accuracy = get_num(j, "balanced_accuracy");
  m.sensitivity = get_num(j, "sample_sensitivity");
  m.specificity = get_num(j, "sample_specificity");
  m.event_sensitivity = get_num(j, "event_sensitivity");
  m.event_far = get_num(j, "event_far_per_hour");
  m.hours = j.at("hours").get<double>();
  const auto& c = j.at("counts");
  m.samples.tp = c.at("tp").get<std::size_t>();
  m.samples.tn = c.at("tn").get<std::size_t>();
  m.samples.fp = c.at("fp").get<std::size_t>();
  m.samples.fn = c.at("fn").get<std::size_t>();
  m.events.gt_events = c.at("gt_events").get<std::size_t>();
  m.events.detected = c.at("detected_events").get<std::size_t>();
  m.events.pred_events = c.at("predicted_events").get<std::size_t>();
  m.events.true_pred = c.at("true_predicted_events").get<std::size_t>();
  m.events.false_pred = c.at("false_predicted_events").get<std::size_t>();
  return m;
}

std::string report_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(16) << "Model" << std::right << std::setw(10) << "BA" << std::setw(12) << "Samp.Sens"
     << std::setw(12) << "Samp.Spec" << std::setw(12) << "Event Sens" << std::setw(18) << "Event FAR (FP/h)"
     << "\n";
  os << std::fixed << std::setprecision(4);
  for (const auto& [name, m] : rows) {
    os << std::left << std::setw(16) << name << std::right << std::setw(10) << m.balanced_accuracy << std::setw(12)
       << m.sensitivity << std::setw(12) << m.specificity << std::setw(12) << m.event_sensitivity << std::setw(18)
       << m.event_far << "\n";
  }
  return os.str();
}

void write_event_audit(const std::filesystem::path& path, const std::vector<SessionOutcome>& sessions) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write event audit '" + path.string() + "'");
  out << "session,kind,onset_s,offset_s,matched\n";
  for (const auto& s : sessions) {
    for (const auto& g : s.truth) {
      const bool hit =
          std::any_of(s.predicted.begin(), s.predicted.end(), [&](const SeizureEvent& p) { return overlaps(p, g); });
      out << s.session << ",truth," << g.onset_s << "," << g.offset_s << "," << (hit ? 1 : 0) << "\n";
    }
    for (const auto& p : s.predicted) {
      const bool hit =
          std::any_of(s.truth.begin(), s.truth.end(), [&](const SeizureEvent& g) { return overlaps(p, g); });
      out << s.session << ",predicted," << p.onset_s << "," << p.offset_s << "," << (hit ? 1 : 0) << "\n";
    }
  }
  if (!out) throw IoError("failed writing event audit '" + path.string() + "'");
}

}  // namespace evf
