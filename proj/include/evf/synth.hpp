#pragma once

// Synthetic video-EEG corpus with exact ground truth.
//
// EEG background is pink noise (Voss-McCartney) plus line noise and slow
// drift. Seizures add a high-amplitude 5-8 Hz spike-wave rhythm on every
// channel. A fraction of seizures are buried under a broadband movement
// artifact, and the same kind of artifact also appears interictally, so
// EEG alone cannot tell those apart. Video tokens are low-variance noise
// except during seizures and benign movement, which share one motion
// signature, so video alone cannot tell those apart.

#include <cstdint>
#include <vector>

#include "evf/data.hpp"

namespace evf {

struct GeneratorSpec {
  std::size_t sessions = 10;
  std::size_t subjects = 5;
  double duration_s = 600.0;
  double sample_rate = 200.0;
  std::size_t channels = 2;

  double seizures_per_session = 3.0;  // Poisson mean
  double seizure_min_s = 20.0;
  double seizure_max_s = 60.0;
  double min_gap_s = 30.0;  // clearance between any two injected segments

  double background_rms = 1.0;
  double channel_correlation = 0.5;
  double ictal_amplitude = 5.0;  // ictal RMS / background RMS
  double ictal_freq_min_hz = 5.0;
  double ictal_freq_max_hz = 8.0;

  double artifact_seizure_fraction = 0.3;
  double artifact_amplitude = 10.0;    // artifact RMS / background RMS
  double artifact_rhythm_gain = 0.0;   // ictal rhythm left under an artifact
  double interictal_artifacts_per_hour = 3.0;
  double artifact_min_s = 12.0;
  double artifact_max_s = 30.0;

  double benign_motion_fraction = 0.1;  // of interictal time
  double benign_min_s = 20.0;
  double benign_max_s = 60.0;

  double line_noise_amplitude = 0.5;  // 50 Hz
  double drift_amplitude = 2.0;
  double drift_hz = 0.1;

  std::size_t video_tokens = 16;
  std::size_t video_dim = 64;
  double video_noise = 0.1;
  double motion_amplitude = 1.0;

  std::uint64_t seed = 7;

  // Throws ConfigError for infeasible or out-of-range settings.
  void validate() const;
};

std::vector<Session> generate_synthetic_corpus(const GeneratorSpec& spec);

// Voss-McCartney pink noise with unit RMS.
std::vector<double> pink_noise(std::size_t n, Rng& rng);

}  // namespace evf
