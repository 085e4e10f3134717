#pragma once

// On-disk formats for recordings, video tokens, annotations, corpus
// manifests and CSV outputs.
//
// EEG file (little-endian):
//   "EVFEEG01", u32 channels, u64 samples, f64 sample_rate, f64 start_time,
//   channels x name string (u32 length + bytes), f32 payload channel-major.
// Video-token file:
//   "EVFVTOK1", u32 tokens, u32 dim, u64 windows, f32 payload
//   (window-major, then token, then feature).

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "evf/data.hpp"
#include "evf/dsp.hpp"
#include "evf/eval.hpp"
#include "evf/ot.hpp"

namespace evf {

void write_eeg(const std::filesystem::path& path, const EegRecording& rec);
EegRecording read_eeg(const std::filesystem::path& path);
// Header row of channel names, then one row of samples per line.
EegRecording read_eeg_csv(const std::filesystem::path& path, double sample_rate);

void write_video_tokens(const std::filesystem::path& path, const VideoTokens& tokens);
VideoTokens read_video_tokens(const std::filesystem::path& path);

// JSON list of {"onset_s": .., "offset_s": ..}.
void write_annotations(const std::filesystem::path& path, const EventList& events);
EventList read_annotations(const std::filesystem::path& path);

struct CorpusMeta {
  std::uint64_t seed = 0;
  std::string fingerprint;
};

// Writes one EEG, video and annotation file per session and then
// manifest.json. The manifest is written last through a temporary file, so
// a failed run never leaves a manifest behind.
void save_corpus(const std::filesystem::path& dir, const std::vector<Session>& sessions, const CorpusMeta& meta);
// Accepts the corpus directory or the manifest path. Sessions come back in
// manifest order (sorted by id).
std::vector<Session> load_corpus(const std::filesystem::path& dir_or_manifest);
std::filesystem::path manifest_path(const std::filesystem::path& dir);

struct PredictionRow {
  std::string session;
  double start_s = 0.0;
  double probability = 0.0;
};

void write_predictions(const std::filesystem::path& path, const std::vector<PredictionRow>& rows);
std::vector<PredictionRow> read_predictions(const std::filesystem::path& path);

void write_psd_csv(const std::filesystem::path& path, const PsdResult& psd, const std::vector<std::string>& names);
void write_plan_csv(const std::filesystem::path& path, const std::string& session, double start_s, const Matrix& plan,
                    bool append);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace evf
