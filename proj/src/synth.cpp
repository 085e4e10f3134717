#include "evf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "evf/errors.hpp"

namespace evf {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

Rng derive_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return Rng(splitmix64(splitmix64(seed ^ (a * 0x100000001b3ull)) ^ b));
}

bool inside(double t, const EventList& segs) {
  return std::any_of(segs.begin(), segs.end(), [t](const SeizureEvent& e) { return e.onset_s <= t && t < e.offset_s; });
}

// Places a whole-second segment of `length` seconds keeping `gap` clearance
// from every occupied interval and from the session edges.
bool place(double length, double duration, double gap, std::vector<SeizureEvent>& occupied, Rng& rng,
           SeizureEvent& out) {
  const double lo = gap;
  const double hi = duration - gap - length;
  if (hi < lo) return false;
  std::uniform_real_distribution<double> pos(lo, hi);
  for (int attempt = 0; attempt < 200; ++attempt) {
    const double onset = std::floor(pos(rng));
    const SeizureEvent cand{onset, onset + length};
    const bool clear = std::all_of(occupied.begin(), occupied.end(), [&](const SeizureEvent& e) {
      return cand.offset_s + gap <= e.onset_s || e.offset_s + gap <= cand.onset_s;
    });
    if (clear) {
      occupied.push_back(cand);
      out = cand;
      return true;
    }
  }
  return false;
}

void sort_events(EventList& e) {
  std::sort(e.begin(), e.end(), [](const SeizureEvent& a, const SeizureEvent& b) { return a.onset_s < b.onset_s; });
}

// Spike-and-wave-like periodic waveform with unit RMS.
double ictal_wave(double phase) {
  static const double norm = 1.0 / std::sqrt(0.5 * (1.0 + 0.25 + 0.0625));
  return norm * (std::sin(phase) + 0.5 * std::sin(2.0 * phase + 0.3) + 0.25 * std::sin(3.0 * phase + 0.7));
}

// Raised-cosine onset/offset envelope with `ramp` seconds on each side.
double envelope(double t, const SeizureEvent& e, double ramp) {
  if (t < e.onset_s || t >= e.offset_s) return 0.0;
  const double a = std::min(1.0, (t - e.onset_s) / ramp);
  const double b = std::min(1.0, (e.offset_s - t) / ramp);
  const double x = std::min(a, b);
  return 0.5 - 0.5 * std::cos(std::numbers::pi * x);
}

}  // namespace

void GeneratorSpec::validate() const {
  if (sessions == 0) throw ConfigError("generator: need at least one session");
  if (subjects == 0 || subjects > sessions) throw ConfigError("generator: subjects must be in [1, sessions]");
  if (!(sample_rate > 100.0)) throw ConfigError("generator: sample rate must exceed 100 Hz (50 Hz notch)");
  if (channels == 0) throw ConfigError("generator: need at least one channel");
  if (!(duration_s >= 10.0)) throw ConfigError("generator: sessions must last at least one 10 s window");
  if (seizures_per_session < 0.0) throw ConfigError("generator: seizure rate must be nonnegative");
  if (!(seizure_min_s > 0.0 && seizure_min_s <= seizure_max_s)) throw ConfigError("generator: bad seizure durations");
  if (seizures_per_session > 0.0 && seizure_max_s + 2.0 * min_gap_s > duration_s) {
    throw ConfigError("generator: seizures of up to " + std::to_string(seizure_max_s) +
                      " s (plus clearance) do not fit in a " + std::to_string(duration_s) + " s session");
  }
  if (!(artifact_seizure_fraction >= 0.0 && artifact_seizure_fraction <= 1.0)) {
    throw ConfigError("generator: artifact fraction must be in [0, 1]");
  }
  if (!(benign_motion_fraction >= 0.0 && benign_motion_fraction < 1.0)) {
    throw ConfigError("generator: benign motion fraction must be in [0, 1)");
  }
  if (!(ictal_freq_min_hz > 0.0 && ictal_freq_min_hz <= ictal_freq_max_hz)) {
    throw ConfigError("generator: bad ictal frequency range");
  }
  if (video_tokens == 0 || video_dim == 0) throw ConfigError("generator: video token shape must be nonzero");
}

std::vector<double> pink_noise(std::size_t n, Rng& rng) {
  constexpr int kRows = 16;
  std::normal_distribution<double> gauss(0.0, 1.0);
  double rows[kRows];
  double running = 0.0;
  for (double& r : rows) {
    r = gauss(rng);
    running += r;
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    // Row k is refreshed every 2^k samples (index of the lowest set bit).
    if (i > 0) {
      const int k = std::countr_zero(i);
      if (k < kRows) {
        running -= rows[k];
        rows[k] = gauss(rng);
        running += rows[k];
      }
    }
    out[i] = running + gauss(rng);
  }
  double mu = 0.0;
  for (double v : out) mu += v;
  mu /= static_cast<double>(std::max<std::size_t>(n, 1));
  double ss = 0.0;
  for (double& v : out) {
    v -= mu;
    ss += v * v;
  }
  const double rms = std::sqrt(ss / static_cast<double>(std::max<std::size_t>(n, 1)));
  if (rms > 0.0)
    for (double& v : out) v /= rms;
  return out;
}

std::vector<Session> generate_synthetic_corpus(const GeneratorSpec& spec) {
  spec.validate();
  // One motion signature shared by seizures and benign movement.
  std::vector<double> signature(spec.video_dim);
  {
    Rng rng = derive_rng(spec.seed, 0xfeed);
    std::normal_distribution<double> g(0.0, 1.0);
    for (double& v : signature) v = g(rng);
  }

  std::vector<Session> corpus;
  corpus.reserve(spec.sessions);
  const std::size_t samples = static_cast<std::size_t>(std::llround(spec.duration_s * spec.sample_rate));

  for (std::size_t s = 0; s < spec.sessions; ++s) {
    Rng rng = derive_rng(spec.seed, 1 + s);
    Session sess;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "s%03zu", s);
    sess.id = buf;
    std::snprintf(buf, sizeof(buf), "m%03zu", 101 + s % spec.subjects);
    sess.subject = buf;
    sess.duration_s = spec.duration_s;

    // Timeline.
    std::vector<SeizureEvent> occupied;
    std::poisson_distribution<int> n_seizures(spec.seizures_per_session);
    std::uniform_real_distribution<double> sz_len(spec.seizure_min_s, spec.seizure_max_s);
    const int k = spec.seizures_per_session > 0.0 ? n_seizures(rng) : 0;
    for (int i = 0; i < k; ++i) {
      SeizureEvent e;
      if (place(std::round(sz_len(rng)), spec.duration_s, spec.min_gap_s, occupied, rng, e)) sess.events.push_back(e);
    }
    sort_events(sess.events);
    std::bernoulli_distribution art_flag(spec.artifact_seizure_fraction);
    for (std::size_t i = 0; i < sess.events.size(); ++i) sess.truth.seizure_artifact.push_back(art_flag(rng));

    double ictal_time = 0.0;
    for (const auto& e : sess.events) ictal_time += e.duration();
    double motion_left = spec.benign_motion_fraction * (spec.duration_s - ictal_time);
    std::uniform_real_distribution<double> benign_len(spec.benign_min_s, spec.benign_max_s);
    for (int attempt = 0; motion_left >= spec.benign_min_s && attempt < 100; ++attempt) {
      const double len = std::min(std::round(benign_len(rng)), std::floor(motion_left));
      SeizureEvent e;
      if (place(len, spec.duration_s, spec.min_gap_s, occupied, rng, e)) {
        sess.truth.benign_motion.push_back(e);
        motion_left -= len;
      }
    }
    sort_events(sess.truth.benign_motion);

    std::poisson_distribution<int> n_art(spec.interictal_artifacts_per_hour * spec.duration_s / 3600.0);
    std::uniform_real_distribution<double> art_len(spec.artifact_min_s, spec.artifact_max_s);
    const int n_artifacts = spec.interictal_artifacts_per_hour > 0.0 ? n_art(rng) : 0;
    for (int i = 0; i < n_artifacts; ++i) {
      SeizureEvent e;
      if (place(std::round(art_len(rng)), spec.duration_s, spec.min_gap_s, occupied, rng, e)) {
        sess.truth.eeg_artifacts.push_back(e);
      }
    }
    sort_events(sess.truth.eeg_artifacts);

    // EEG.
    EegRecording& rec = sess.recording;
    rec.sample_rate = spec.sample_rate;
    rec.start_time = 0.0;
    const auto common = pink_noise(samples, rng);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> sz_freq, sz_phase;
    for (std::size_t i = 0; i < sess.events.size(); ++i) {
      sz_freq.push_back(spec.ictal_freq_min_hz + (spec.ictal_freq_max_hz - spec.ictal_freq_min_hz) * unif(rng));
      sz_phase.push_back(kTwoPi * unif(rng));
    }
    const double line_phase = kTwoPi * unif(rng);
    const double rho = std::clamp(spec.channel_correlation, 0.0, 1.0);
    for (std::size_t c = 0; c < spec.channels; ++c) {
      rec.channel_names.push_back("EEG" + std::to_string(c + 1));
      const auto own = pink_noise(samples, rng);
      const double gain = 1.0 - 0.2 * static_cast<double>(c) / static_cast<double>(std::max<std::size_t>(spec.channels, 1));
      const double lag = 0.3 * static_cast<double>(c);
      const double drift_phase = kTwoPi * unif(rng);
      std::vector<double> x(samples);
      for (std::size_t n = 0; n < samples; ++n) {
        const double t = static_cast<double>(n) / spec.sample_rate;
        double v = spec.background_rms * (std::sqrt(rho) * common[n] + std::sqrt(1.0 - rho) * own[n]);
        v += spec.line_noise_amplitude * std::sin(kTwoPi * 50.0 * t + line_phase);
        v += spec.drift_amplitude * std::sin(kTwoPi * spec.drift_hz * t + drift_phase);
        x[n] = v;
      }
      for (std::size_t i = 0; i < sess.events.size(); ++i) {
        const auto& e = sess.events[i];
        const double amp = spec.ictal_amplitude * spec.background_rms * gain *
                           (sess.truth.seizure_artifact[i] ? spec.artifact_rhythm_gain : 1.0);
        const auto n0 = static_cast<std::size_t>(e.onset_s * spec.sample_rate);
        const auto n1 = std::min(samples, static_cast<std::size_t>(e.offset_s * spec.sample_rate));
        for (std::size_t n = n0; n < n1; ++n) {
          const double t = static_cast<double>(n) / spec.sample_rate;
          x[n] += amp * envelope(t, e, 1.0) * ictal_wave(kTwoPi * sz_freq[i] * t + sz_phase[i] + lag);
        }
      }
      auto add_burst = [&](const SeizureEvent& e) {
        const auto n0 = static_cast<std::size_t>(e.onset_s * spec.sample_rate);
        const auto n1 = std::min(samples, static_cast<std::size_t>(e.offset_s * spec.sample_rate));
        for (std::size_t n = n0; n < n1; ++n) {
          const double t = static_cast<double>(n) / spec.sample_rate;
          x[n] += spec.artifact_amplitude * spec.background_rms * envelope(t, e, 0.5) * gauss(rng);
        }
      };
      for (std::size_t i = 0; i < sess.events.size(); ++i)
        if (sess.truth.seizure_artifact[i]) add_burst(sess.events[i]);
      for (const auto& e : sess.truth.eeg_artifacts) add_burst(e);
      // Stored at f32 precision so the on-disk corpus round-trips exactly.
      for (double& v : x) v = static_cast<double>(static_cast<float>(v));
      rec.channels.push_back(std::move(x));
    }

    // Video tokens, one block per 1 s-stride window; token j of the window
    // at start w covers [w + j * dt, w + (j + 1) * dt).
    VideoTokens& vt = sess.video;
    vt.tokens = spec.video_tokens;
    vt.dim = spec.video_dim;
    vt.windows = window_count(spec.duration_s);
    vt.values.resize(vt.windows * vt.tokens * vt.dim);
    const double dt = 10.0 / static_cast<double>(vt.tokens);
    for (std::size_t w = 0; w < vt.windows; ++w) {
      Rng wrng = derive_rng(spec.seed, 1 + s, 1 + w);
      std::normal_distribution<double> g(0.0, 1.0);
      for (std::size_t j = 0; j < vt.tokens; ++j) {
        const double t = static_cast<double>(w) + (static_cast<double>(j) + 0.5) * dt;
        const bool moving = inside(t, sess.events) || inside(t, sess.truth.benign_motion);
        const double pulse = 0.6 + 0.4 * std::abs(std::sin(kTwoPi * 1.5 * t));
        float* tok = vt.values.data() + (w * vt.tokens + j) * vt.dim;
        for (std::size_t d = 0; d < vt.dim; ++d) {
          double v = spec.video_noise * g(wrng);
          if (moving) v += spec.motion_amplitude * (pulse * signature[d] + 0.3 * g(wrng));
          tok[d] = static_cast<float>(v);
        }
      }
    }
    corpus.push_back(std::move(sess));
  }
  return corpus;
}

}  // namespace evf
