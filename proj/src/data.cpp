#include "evf/data.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>

#include "evf/errors.hpp"

namespace evf {

void validate_events(const EventList& events, double duration_s) {
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (!(e.offset_s > e.onset_s)) throw DataError("event " + std::to_string(i) + ": offset must exceed onset");
    if (duration_s >= 0.0 && (e.onset_s < 0.0 || e.offset_s > duration_s)) {
      throw DataError("event " + std::to_string(i) + " lies outside the session");
    }
    if (i > 0 && e.onset_s < events[i - 1].offset_s) {
      throw DataError("events must be sorted and non-overlapping (event " + std::to_string(i) + ")");
    }
  }
}

std::span<const float> VideoTokens::window(std::size_t w) const {
  if (w >= windows) throw DataError("video tokens: window " + std::to_string(w) + " out of range");
  return std::span<const float>(values).subspan(w * tokens * dim, tokens * dim);
}

Tensor VideoTokens::window_tensor(std::size_t w) const {
  auto v = window(w);
  return Tensor({tokens, dim}, std::vector<double>(v.begin(), v.end()));
}

bool window_is_ictal(double start_s, double length_s, const EventList& events) {
  const double end = start_s + length_s;
  return std::any_of(events.begin(), events.end(),
                     [&](const SeizureEvent& e) { return e.onset_s <= start_s && end <= e.offset_s; });
}

std::size_t window_count(double duration_s, const WindowConfig& config) {
  if (duration_s < config.length_s) return 0;
  // Small epsilon keeps integer durations from flooring down after rounding.
  return static_cast<std::size_t>(std::floor((duration_s - config.length_s) / config.stride_s + 1e-9)) + 1;
}

std::vector<WindowSample> segment_windows(const Session& session, std::size_t session_index,
                                          const WindowConfig& config) {
  if (session.duration_s < config.length_s) {
    throw DataError("session '" + session.id + "' lasts " + std::to_string(session.duration_s) +
                    " s, shorter than one " + std::to_string(config.length_s) + " s window");
  }
  const std::size_t n = window_count(session.duration_s, config);
  std::vector<WindowSample> out;
  out.reserve(n);
  for (std::size_t w = 0; w < n; ++w) {
    const double start = static_cast<double>(w) * config.stride_s;
    out.push_back({session_index, w, start, window_is_ictal(start, config.length_s, session.events)});
  }
  return out;
}

std::vector<WindowSample> downsample_negatives(const std::vector<WindowSample>& windows, std::size_t ratio,
                                               Rng& rng) {
  std::vector<std::size_t> neg;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (windows[i].seizure)
      ++positives;
    else
      neg.push_back(i);
  }
  if (positives == 0) throw DataError("downsample: no positive windows to balance against");
  const std::size_t keep = std::min(neg.size(), ratio * positives);
  std::vector<std::size_t> chosen;
  chosen.reserve(keep);
  std::sample(neg.begin(), neg.end(), std::back_inserter(chosen), keep, rng);
  std::vector<bool> kept(windows.size(), false);
  for (std::size_t i : chosen) kept[i] = true;
  std::vector<WindowSample> out;
  out.reserve(positives + keep);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (windows[i].seizure || kept[i]) out.push_back(windows[i]);
  }
  return out;
}

SessionSplit split_sessions(std::span<const std::string> subjects, const SplitParams& params, Rng& rng) {
  SessionSplit split;
  const std::size_t n = subjects.size();
  if (params.mode == SplitMode::random_session) {
    if (params.test_sessions > n) {
      throw DataError("split: asked for " + std::to_string(params.test_sessions) + " test sessions out of " +
                      std::to_string(n));
    }
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    split.test.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(params.test_sessions));
    split.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(params.test_sessions), idx.end());
  } else {
    for (std::size_t i = 0; i < n; ++i) (subjects[i] == params.subject ? split.test : split.train).push_back(i);
    if (split.test.empty()) throw DataError("split: unknown subject '" + params.subject + "'");
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

SplitMode parse_split_mode(const std::string& s) {
  if (s == "random-session" || s == "random_session") return SplitMode::random_session;
  if (s == "held-out-subject" || s == "held_out_subject") return SplitMode::held_out_subject;
  throw ConfigError("unknown split mode '" + s + "' (expected random-session or held-out-subject)");
}

std::string to_string(SplitMode mode) {
  return mode == SplitMode::random_session ? "random-session" : "held-out-subject";
}

}  // namespace evf
