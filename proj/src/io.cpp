#include "evf/io.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "evf/binio.hpp"
#include "evf/errors.hpp"

namespace evf {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr char kEegMagic[8] = {'E', 'V', 'F', 'E', 'E', 'G', '0', '1'};
constexpr char kVideoMagic[8] = {'E', 'V', 'F', 'V', 'T', 'O', 'K', '1'};

std::ofstream open_out(const fs::path& path, bool binary = true, bool append = false) {
  auto mode = std::ios::out | (binary ? std::ios::binary : std::ios::openmode{}) |
              (append ? std::ios::app : std::ios::trunc);
  std::ofstream os(path, mode);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  return os;
}

std::ifstream open_in(const fs::path& path, bool binary = true) {
  std::ifstream is(path, binary ? std::ios::in | std::ios::binary : std::ios::in);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  return is;
}

void check_magic(std::istream& is, const char (&magic)[8], const fs::path& path) {
  char buf[8];
  if (!is.read(buf, 8) || std::memcmp(buf, magic, 8) != 0) {
    throw IoError("'" + path.string() + "' is not a " + std::string(magic, 8) + " file");
  }
}

void write_floats(std::ostream& os, const std::vector<float>& v) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
  } else {
    for (float x : v) binio::write_le(os, x);
  }
}

std::vector<float> read_floats(std::istream& is, std::size_t n) {
  std::vector<float> v(n);
  if constexpr (std::endian::native == std::endian::little) {
    if (!is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(float)))) {
      throw IoError("unexpected end of file in payload");
    }
  } else {
    for (float& x : v) x = binio::read_le<float>(is);
  }
  return v;
}

void finish(std::ofstream& os, const fs::path& path) {
  os.flush();
  if (!os) throw IoError("failed writing '" + path.string() + "'");
}

json events_json(const EventList& events) {
  json arr = json::array();
  for (const auto& e : events) arr.push_back({{"onset_s", e.onset_s}, {"offset_s", e.offset_s}});
  return arr;
}

EventList events_from_json(const json& arr) {
  if (!arr.is_array()) throw DataError("annotations must be a JSON list");
  EventList out;
  for (const auto& e : arr) out.push_back({e.at("onset_s").get<double>(), e.at("offset_s").get<double>()});
  return out;
}

std::string fmt(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    out.push_back(cell);
  }
  return out;
}

double parse_double(const std::string& s, const fs::path& path, std::size_t line) {
  double v = 0.0;
  const char* first = s.data();
  while (first != s.data() + s.size() && *first == ' ') ++first;
  auto res = std::from_chars(first, s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw DataError("'" + path.string() + "' line " + std::to_string(line) + ": '" + s + "' is not a number");
  }
  return v;
}

}  // namespace

void write_eeg(const fs::path& path, const EegRecording& rec) {
  rec.validate();
  auto os = open_out(path);
  os.write(kEegMagic, 8);
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(rec.num_channels()));
  binio::write_le<std::uint64_t>(os, rec.num_samples());
  binio::write_le<double>(os, rec.sample_rate);
  binio::write_le<double>(os, rec.start_time);
  for (const auto& name : rec.channel_names) binio::write_string(os, name);
  std::vector<float> payload;
  payload.reserve(rec.num_channels() * rec.num_samples());
  for (const auto& ch : rec.channels)
    for (double v : ch) payload.push_back(static_cast<float>(v));
  write_floats(os, payload);
  finish(os, path);
}

EegRecording read_eeg(const fs::path& path) {
  auto is = open_in(path);
  check_magic(is, kEegMagic, path);
  EegRecording rec;
  const auto channels = binio::read_le<std::uint32_t>(is);
  const auto samples = binio::read_le<std::uint64_t>(is);
  rec.sample_rate = binio::read_le<double>(is);
  rec.start_time = binio::read_le<double>(is);
  if (channels > 4096 || samples > (1ull << 34)) throw IoError("'" + path.string() + "': implausible header");
  for (std::uint32_t c = 0; c < channels; ++c) rec.channel_names.push_back(binio::read_string(is, 4096));
  const auto payload = read_floats(is, static_cast<std::size_t>(channels) * samples);
  for (std::uint32_t c = 0; c < channels; ++c) {
    const auto first = payload.begin() + static_cast<std::ptrdiff_t>(c * samples);
    rec.channels.emplace_back(first, first + static_cast<std::ptrdiff_t>(samples));
  }
  rec.validate();
  return rec;
}

EegRecording read_eeg_csv(const fs::path& path, double sample_rate) {
  auto is = open_in(path, false);
  std::string line;
  if (!std::getline(is, line)) throw DataError("'" + path.string() + "' is empty");
  EegRecording rec;
  rec.sample_rate = sample_rate;
  rec.channel_names = split_csv(line);
  rec.channels.resize(rec.channel_names.size());
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv(line);
    if (cells.size() != rec.channels.size()) {
      throw DataError("'" + path.string() + "' line " + std::to_string(lineno) + ": expected " +
                      std::to_string(rec.channels.size()) + " columns");
    }
    for (std::size_t c = 0; c < cells.size(); ++c) rec.channels[c].push_back(parse_double(cells[c], path, lineno));
  }
  rec.validate();
  return rec;
}

void write_video_tokens(const fs::path& path, const VideoTokens& tokens) {
  if (tokens.values.size() != tokens.windows * tokens.tokens * tokens.dim) {
    throw DataError("video tokens: payload size does not match header");
  }
  auto os = open_out(path);
  os.write(kVideoMagic, 8);
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(tokens.tokens));
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(tokens.dim));
  binio::write_le<std::uint64_t>(os, tokens.windows);
  write_floats(os, tokens.values);
  finish(os, path);
}

VideoTokens read_video_tokens(const fs::path& path) {
  auto is = open_in(path);
  check_magic(is, kVideoMagic, path);
  VideoTokens t;
  t.tokens = binio::read_le<std::uint32_t>(is);
  t.dim = binio::read_le<std::uint32_t>(is);
  t.windows = binio::read_le<std::uint64_t>(is);
  if (t.windows > (1ull << 30)) throw IoError("'" + path.string() + "': implausible header");
  t.values = read_floats(is, t.windows * t.tokens * t.dim);
  return t;
}

void write_annotations(const fs::path& path, const EventList& events) {
  validate_events(events);
  write_text(path, events_json(events).dump(2) + "\n");
}

EventList read_annotations(const fs::path& path) {
  EventList events;
  try {
    events = events_from_json(json::parse(read_text(path)));
  } catch (const json::exception& e) {
    throw DataError("'" + path.string() + "': " + e.what());
  }
  validate_events(events);
  return events;
}

fs::path manifest_path(const fs::path& dir) { return dir / "manifest.json"; }

void save_corpus(const fs::path& dir, const std::vector<Session>& sessions, const CorpusMeta& meta) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create corpus directory '" + dir.string() + "'");
  fs::remove(manifest_path(dir), ec);
  json manifest;
  manifest["version"] = 1;
  manifest["seed"] = meta.seed;
  manifest["fingerprint"] = meta.fingerprint;
  json entries = json::object();
  for (const auto& s : sessions) {
    validate_events(s.events, s.duration_s);
    const std::string eeg = s.id + ".eeg", video = s.id + ".vtok", ann = s.id + ".events.json";
    write_eeg(dir / eeg, s.recording);
    write_video_tokens(dir / video, s.video);
    write_annotations(dir / ann, s.events);
    json e{{"subject", s.subject}, {"eeg", eeg}, {"video", video}, {"annotations", ann}, {"duration_s", s.duration_s}};
    if (!s.truth.benign_motion.empty() || !s.truth.eeg_artifacts.empty() || !s.truth.seizure_artifact.empty()) {
      std::vector<int> flags(s.truth.seizure_artifact.begin(), s.truth.seizure_artifact.end());
      e["synthetic"] = {{"benign_motion", events_json(s.truth.benign_motion)},
                        {"eeg_artifacts", events_json(s.truth.eeg_artifacts)},
                        {"seizure_artifact", flags}};
    }
    entries[s.id] = e;
  }
  manifest["sessions"] = entries;
  const fs::path tmp = dir / "manifest.json.tmp";
  write_text(tmp, manifest.dump(2) + "\n");
  fs::rename(tmp, manifest_path(dir), ec);
  if (ec) throw IoError("cannot finalize manifest in '" + dir.string() + "': " + ec.message());
}

std::vector<Session> load_corpus(const fs::path& dir_or_manifest) {
  const fs::path mpath = fs::is_directory(dir_or_manifest) ? manifest_path(dir_or_manifest) : dir_or_manifest;
  if (!fs::exists(mpath)) {
    throw IoError("corpus manifest '" + mpath.string() + "' not found (run gen-data first)");
  }
  const fs::path dir = mpath.parent_path();
  json manifest;
  try {
    manifest = json::parse(read_text(mpath));
  } catch (const json::exception& e) {
    throw DataError("'" + mpath.string() + "': " + e.what());
  }
  std::vector<Session> out;
  for (const auto& [id, e] : manifest.at("sessions").items()) {
    Session s;
    s.id = id;
    s.subject = e.at("subject").get<std::string>();
    s.recording = read_eeg(dir / e.at("eeg").get<std::string>());
    s.video = read_video_tokens(dir / e.at("video").get<std::string>());
    s.events = read_annotations(dir / e.at("annotations").get<std::string>());
    s.duration_s = e.contains("duration_s") ? e.at("duration_s").get<double>() : s.recording.duration_s();
    validate_events(s.events, s.duration_s);
    if (e.contains("synthetic")) {
      const auto& t = e.at("synthetic");
      s.truth.benign_motion = events_from_json(t.at("benign_motion"));
      s.truth.eeg_artifacts = events_from_json(t.at("eeg_artifacts"));
      for (int f : t.at("seizure_artifact").get<std::vector<int>>()) s.truth.seizure_artifact.push_back(f != 0);
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_predictions(const fs::path& path, const std::vector<PredictionRow>& rows) {
  std::ostringstream os;
  os << "session,start_s,probability\n";
  for (const auto& r : rows) os << r.session << "," << fmt(r.start_s) << "," << fmt(r.probability) << "\n";
  write_text(path, os.str());
}

std::vector<PredictionRow> read_predictions(const fs::path& path) {
  auto is = open_in(path, false);
  std::string line;
  std::getline(is, line);
  std::vector<PredictionRow> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 3) throw DataError("'" + path.string() + "' line " + std::to_string(lineno) + ": bad row");
    rows.push_back({cells[0], parse_double(cells[1], path, lineno), parse_double(cells[2], path, lineno)});
  }
  return rows;
}

void write_psd_csv(const fs::path& path, const PsdResult& psd, const std::vector<std::string>& names) {
  std::ostringstream os;
  os << "frequency_hz";
  for (std::size_t c = 0; c < psd.power.size(); ++c) os << "," << (c < names.size() ? names[c] : "ch" + std::to_string(c));
  os << "\n";
  for (std::size_t k = 0; k < psd.frequencies.size(); ++k) {
    os << fmt(psd.frequencies[k]);
    for (const auto& ch : psd.power) os << "," << fmt(ch[k]);
    os << "\n";
  }
  write_text(path, os.str());
}

void write_plan_csv(const fs::path& path, const std::string& session, double start_s, const Matrix& plan,
                    bool append) {
  const bool header = !append || !fs::exists(path);
  auto os = open_out(path, false, append);
  if (header) os << "session,start_s,eeg_token,video_token,mass\n";
  for (std::size_t i = 0; i < plan.rows; ++i)
    for (std::size_t j = 0; j < plan.cols; ++j)
      os << session << "," << fmt(start_s) << "," << i << "," << j << "," << fmt(plan(i, j)) << "\n";
  finish(os, path);
}

std::string read_text(const fs::path& path) {
  auto is = open_in(path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  auto os = open_out(path);
  os << text;
  finish(os, path);
}

}  // namespace evf
