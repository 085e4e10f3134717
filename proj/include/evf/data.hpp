#pragma once

// Session model, sliding-window segmentation with conservative labels,
// negative downsampling and session splits.

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "evf/dsp.hpp"
#include "evf/tensor.hpp"

namespace evf {

// Half-open interval [onset_s, offset_s) in seconds.
struct SeizureEvent {
  double onset_s = 0.0;
  double offset_s = 0.0;

  double duration() const { return offset_s - onset_s; }
  bool operator==(const SeizureEvent&) const = default;
};

using EventList = std::vector<SeizureEvent>;

// Throws DataError unless events are well-formed, sorted, non-overlapping
// and (when duration_s >= 0) inside [0, duration_s].
void validate_events(const EventList& events, double duration_s = -1.0);

// Per-window token matrices, one [tokens x dim] block per window start
// 0, 1, 2, ... seconds.
struct VideoTokens {
  std::size_t tokens = 16;  // T_v
  std::size_t dim = 64;     // D_v
  std::size_t windows = 0;
  std::vector<float> values;  // windows * tokens * dim

  std::span<const float> window(std::size_t w) const;
  Tensor window_tensor(std::size_t w) const;
};

// Ground truth for the nuisance segments the generator injects; empty for
// sessions that did not come from the generator.
struct SyntheticTruth {
  EventList benign_motion;
  EventList eeg_artifacts;           // interictal artifact bursts
  std::vector<bool> seizure_artifact;  // per seizure event
};

struct Session {
  std::string id;
  std::string subject;
  EegRecording recording;
  VideoTokens video;
  EventList events;
  double duration_s = 0.0;
  SyntheticTruth truth;
};

struct WindowConfig {
  double length_s = 10.0;
  double stride_s = 1.0;
};

struct WindowSample {
  std::size_t session = 0;  // index into the session list it was cut from
  std::size_t index = 0;    // window index within the session
  double start_s = 0.0;
  bool seizure = false;
};

// True iff [start, start + length) lies inside one event.
bool window_is_ictal(double start_s, double length_s, const EventList& events);

// Number of windows floor((duration - length) / stride) + 1.
std::size_t window_count(double duration_s, const WindowConfig& config = {});

// Windows at starts 0, stride, 2*stride, ... labeled conservatively.
// Throws DataError when the session is shorter than one window.
std::vector<WindowSample> segment_windows(const Session& session, std::size_t session_index = 0,
                                          const WindowConfig& config = {});

// Keeps every positive; keeps at most ratio * positives negatives, chosen
// uniformly without replacement. Output keeps the input order.
std::vector<WindowSample> downsample_negatives(const std::vector<WindowSample>& windows, std::size_t ratio,
                                               Rng& rng);

enum class SplitMode { random_session, held_out_subject };

struct SplitParams {
  SplitMode mode = SplitMode::random_session;
  std::size_t test_sessions = 5;  // random_session
  std::string subject;            // held_out_subject
};

struct SessionSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// `subjects[i]` is the subject of session i. Returned index lists are sorted.
SessionSplit split_sessions(std::span<const std::string> subjects, const SplitParams& params, Rng& rng);

SplitMode parse_split_mode(const std::string& s);
std::string to_string(SplitMode mode);

}  // namespace evf
