#pragma once

// EEG preprocessing: zero-phase Butterworth band-pass, 50 Hz notch,
// running-median baseline removal, Welch PSD, and video frame decimation.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace evf {

struct EegRecording {
  double sample_rate = 200.0;
  std::vector<std::string> channel_names;
  std::vector<std::vector<double>> channels;  // C traces of equal length
  double start_time = 0.0;

  std::size_t num_channels() const { return channels.size(); }
  std::size_t num_samples() const { return channels.empty() ? 0 : channels.front().size(); }
  double duration_s() const { return static_cast<double>(num_samples()) / sample_rate; }
  // Throws DataError on unequal channel lengths, name/trace count mismatch
  // or a non-positive sample rate.
  void validate() const;
};

namespace dsp {

// Second-order section, a0 normalized to 1:
//   y[n] = b0 x[n] + b1 x[n-1] + b2 x[n-2] - a1 y[n-1] - a2 y[n-2]
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;
};

struct SosFilter {
  std::vector<Biquad> sections;
  // Magnitude response of one forward pass at `freq_hz`.
  double magnitude(double freq_hz, double sample_rate) const;
};

struct FilterSpec {
  enum class Kind { bandpass, notch };
  Kind kind = Kind::bandpass;
  double low_hz = 1.0;     // bandpass
  double high_hz = 50.0;   // bandpass
  int order = 4;           // bandpass, per edge
  double center_hz = 50.0; // notch
  double quality = 30.0;   // notch
};

// Butterworth low-pass / high-pass via the bilinear transform with
// pre-warping; `order` >= 1.
SosFilter butter_lowpass(int order, double cutoff_hz, double sample_rate);
SosFilter butter_highpass(int order, double cutoff_hz, double sample_rate);
// High-pass at `low` cascaded with low-pass at `high`.
SosFilter butter_bandpass(int order, double low_hz, double high_hz, double sample_rate);
// Second-order IIR notch with quality factor q (bandwidth = f0 / q).
SosFilter iir_notch(double center_hz, double q, double sample_rate);
SosFilter design(const FilterSpec& spec, double sample_rate);

std::vector<double> sosfilt(const SosFilter& f, std::span<const double> x);
// Forward-backward filtering with odd reflection padding and steady-state
// initial conditions. Output length equals input length.
std::vector<double> sosfiltfilt(const SosFilter& f, std::span<const double> x, std::size_t padlen);

// Running median with reflect padding; `window` must be odd.
std::vector<double> running_median(std::span<const double> x, std::size_t window);

}  // namespace dsp

EegRecording apply_filter(const EegRecording& rec, const dsp::FilterSpec& spec);
EegRecording bandpass(const EegRecording& rec, double low_hz = 1.0, double high_hz = 50.0, int order = 4);
EegRecording notch(const EegRecording& rec, double center_hz, double quality = 30.0);
EegRecording notch50(const EegRecording& rec, double quality = 30.0);
// Subtracts a running median of `window_s` seconds (rounded up to an odd
// sample count) from every channel.
EegRecording median_baseline(const EegRecording& rec, double window_s = 1.0);

struct PreprocessConfig {
  double bandpass_low_hz = 1.0;
  double bandpass_high_hz = 50.0;
  int bandpass_order = 4;
  double notch_hz = 50.0;
  double notch_q = 30.0;
  double median_window_s = 1.0;
};

// band-pass -> notch -> median baseline.
EegRecording preprocess(const EegRecording& rec, const PreprocessConfig& config = {});

struct PsdResult {
  std::vector<double> frequencies;
  std::vector<std::vector<double>> power;  // per channel, units^2 / Hz
};

// Welch estimate: Hann-windowed, mean-detrended segments averaged into a
// one-sided density.
PsdResult welch_psd(const EegRecording& rec, double segment_s = 2.0, double overlap_fraction = 0.5);

// Keeps every `factor`-th entry starting with the first (25 fps -> 6.25 fps
// for factor 4). Input must be strictly increasing.
std::vector<std::size_t> decimate_frames(std::span<const std::size_t> frame_indices, std::size_t factor = 4);

}  // namespace evf
