#pragma once

// Window probabilities -> per-second grids -> events, plus sample and event
// metrics pooled over a test set.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "evf/data.hpp"

namespace evf {

struct WindowPrediction {
  double start_s = 0.0;
  double probability = 0.0;
};

struct SecondGrid {
  std::vector<std::uint8_t> predicted;
  std::vector<std::uint8_t> truth;
  double duration_s = 0.0;
};

// Second t is predicted positive iff some window covering t has probability
// >= threshold; truth second t is positive iff t lies in an event. Throws
// DataError when some second is not covered by any window.
SecondGrid to_second_grid(const std::vector<WindowPrediction>& predictions, double threshold,
                          const EventList& truth, double duration_s, double window_s = 10.0);

struct PostprocessParams {
  double merge_gap_s = 5.0;     // merge when gap < this
  double min_duration_s = 10.0; // drop when duration < this
};

// Runs of positive seconds -> merge close runs -> drop short events.
EventList postprocess_events(const std::vector<std::uint8_t>& grid, const PostprocessParams& params = {});
EventList postprocess_events(const EventList& candidates, const PostprocessParams& params = {});
EventList grid_runs(const std::vector<std::uint8_t>& grid);

struct SampleCounts {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
};

struct EventCounts {
  std::size_t gt_events = 0;
  std::size_t detected = 0;   // GT events overlapped by some prediction
  std::size_t pred_events = 0;
  std::size_t true_pred = 0;  // predictions overlapping some GT event
  std::size_t false_pred = 0;
};

struct MetricsReport {
  SampleCounts samples;
  EventCounts events;
  double hours = 0.0;
  // NaN when undefined (no positive / negative seconds, no GT events).
  double sensitivity = 0.0;
  double specificity = 0.0;
  double balanced_accuracy = 0.0;
  double event_sensitivity = 0.0;
  double event_far = 0.0;  // false predicted events per hour
};

void accumulate_samples(const SecondGrid& grid, SampleCounts& counts);
void finalize_samples(MetricsReport& report);
MetricsReport sample_metrics(const std::vector<SecondGrid>& grids);

// Throws ContractError when hours <= 0.
void accumulate_events(const EventList& predicted, const EventList& truth, EventCounts& counts);
MetricsReport event_metrics(const EventList& predicted, const EventList& truth, double hours);
void finalize_events(MetricsReport& report);

struct SessionOutcome {
  std::string session;
  SecondGrid grid;
  EventList predicted;
  EventList truth;
};

// Pools every session (micro average). hours = sum of durations / 3600.
MetricsReport evaluate(const std::vector<SessionOutcome>& sessions);

struct ReportMeta {
  std::string model = "fusion";
  std::string split = "random-session";
  std::uint64_t seed = 0;
  std::string fingerprint;
  std::size_t sessions = 0;
};

std::string report_json(const MetricsReport& m, const ReportMeta& meta);
MetricsReport report_from_json(const std::string& json);
std::string report_table(const std::vector<std::pair<std::string, MetricsReport>>& rows);

// session,kind,onset_s,offset_s,matched  (kind: truth|predicted)
void write_event_audit(const std::filesystem::path& path, const std::vector<SessionOutcome>& sessions);

}  // namespace evf
