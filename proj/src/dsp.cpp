#include "evf/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "evf/errors.hpp"
#include "evf/fft.hpp"

namespace evf {

void EegRecording::validate() const {
  if (!(sample_rate > 0.0) || !std::isfinite(sample_rate)) throw DataError("EEG: sample rate must be positive");
  if (channel_names.size() != channels.size()) {
    throw DataError("EEG: " + std::to_string(channel_names.size()) + " channel names for " +
                    std::to_string(channels.size()) + " traces");
  }
  for (const auto& ch : channels) {
    if (ch.size() != num_samples()) throw DataError("EEG: channels have unequal lengths");
  }
}

namespace dsp {
namespace {

using cd = std::complex<double>;
constexpr double kPi = std::numbers::pi;

// Left-half-plane poles of the normalized analog Butterworth prototype.
std::vector<cd> butter_prototype(int order) {
  std::vector<cd> poles;
  for (int k = 0; k < order; ++k) {
    const double theta = kPi * (2.0 * k + order + 1) / (2.0 * order);
    poles.emplace_back(std::cos(theta), std::sin(theta));
  }
  return poles;
}

Biquad normalize(Biquad s, double at_z) {
  const double num = s.b0 + s.b1 * at_z + s.b2 * at_z * at_z;
  const double den = 1.0 + s.a1 * at_z + s.a2 * at_z * at_z;
  const double g = den / num;
  s.b0 *= g;
  s.b1 *= g;
  s.b2 *= g;
  return s;
}

SosFilter butter(int order, double cutoff_hz, double fs, bool highpass) {
  if (order < 1) throw ConfigError("butterworth: order must be >= 1");
  if (!(cutoff_hz > 0.0 && cutoff_hz < fs / 2.0)) {
    throw ConfigError("butterworth: cutoff " + std::to_string(cutoff_hz) + " Hz outside (0, Nyquist)");
  }
  const double k2 = 2.0 * fs;
  const double warped = k2 * std::tan(kPi * cutoff_hz / fs);
  const auto proto = butter_prototype(order);
  // z = -1 is unity gain for a high-pass (Nyquist), z = 1 for a low-pass (DC).
  const double ref = highpass ? -1.0 : 1.0;
  const double zero_sign = highpass ? -1.0 : 1.0;
  SosFilter f;
  for (int k = 0; k < order / 2; ++k) {
    const cd s = highpass ? warped / proto[k] : warped * proto[k];
    const cd z = (k2 + s) / (k2 - s);
    Biquad b{1.0, 2.0 * zero_sign, 1.0, -2.0 * z.real(), std::norm(z)};
    f.sections.push_back(normalize(b, ref));
  }
  if (order % 2 == 1) {
    const cd s = highpass ? warped / proto[order / 2] : warped * proto[order / 2];
    const double z = ((k2 + s) / (k2 - s)).real();
    Biquad b{1.0, zero_sign, 0.0, -z, 0.0};
    f.sections.push_back(normalize(b, ref));
  }
  return f;
}

// State that a section holds after settling on a constant unit input
// (direct form II transposed).
std::pair<double, double> steady_state(const Biquad& s, double input) {
  const double dc = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
  const double y = dc * input;
  const double z2 = s.b2 * input - s.a2 * y;
  const double z1 = y - s.b0 * input;
  return {z1, z2};
}

std::vector<double> sosfilt_init(const SosFilter& f, std::span<const double> x, double x0) {
  std::vector<double> y(x.begin(), x.end());
  double level = x0;
  for (const Biquad& s : f.sections) {
    auto [z1, z2] = steady_state(s, level);
    level *= (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    for (double& v : y) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
  return y;
}

}  // namespace

double SosFilter::magnitude(double freq_hz, double sample_rate) const {
  const double w = 2.0 * kPi * freq_hz / sample_rate;
  const cd zi = std::polar(1.0, -w);  // z^-1
  cd h = 1.0;
  for (const Biquad& s : sections) {
    h *= (s.b0 + s.b1 * zi + s.b2 * zi * zi) / (1.0 + s.a1 * zi + s.a2 * zi * zi);
  }
  return std::abs(h);
}

SosFilter butter_lowpass(int order, double cutoff_hz, double sample_rate) {
  return butter(order, cutoff_hz, sample_rate, false);
}

SosFilter butter_highpass(int order, double cutoff_hz, double sample_rate) {
  return butter(order, cutoff_hz, sample_rate, true);
}

SosFilter butter_bandpass(int order, double low_hz, double high_hz, double sample_rate) {
  if (!(low_hz > 0.0 && low_hz < high_hz && high_hz < sample_rate / 2.0)) {
    throw ConfigError("bandpass: need 0 < low < high < Nyquist, got low=" + std::to_string(low_hz) +
                      " high=" + std::to_string(high_hz) + " fs=" + std::to_string(sample_rate));
  }
  SosFilter f = butter_highpass(order, low_hz, sample_rate);
  SosFilter lp = butter_lowpass(order, high_hz, sample_rate);
  f.sections.insert(f.sections.end(), lp.sections.begin(), lp.sections.end());
  return f;
}

SosFilter iir_notch(double center_hz, double q, double sample_rate) {
  if (!(center_hz > 0.0 && center_hz < sample_rate / 2.0)) {
    throw ConfigError("notch: " + std::to_string(center_hz) + " Hz requires a sample rate above " +
                      std::to_string(2.0 * center_hz) + " Hz, got " + std::to_string(sample_rate));
  }
  if (!(q > 0.0)) throw ConfigError("notch: quality factor must be positive");
  const double w0 = 2.0 * kPi * center_hz / sample_rate;
  const double bw = w0 / q;
  const double gain = 1.0 / (1.0 + std::tan(bw / 2.0));
  const double c = std::cos(w0);
  SosFilter f;
  f.sections.push_back({gain, -2.0 * gain * c, gain, -2.0 * gain * c, 2.0 * gain - 1.0});
  return f;
}

SosFilter design(const FilterSpec& spec, double sample_rate) {
  if (spec.kind == FilterSpec::Kind::bandpass) {
    return butter_bandpass(spec.order, spec.low_hz, spec.high_hz, sample_rate);
  }
  return iir_notch(spec.center_hz, spec.quality, sample_rate);
}

std::vector<double> sosfilt(const SosFilter& f, std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  for (const Biquad& s : f.sections) {
    double z1 = 0.0, z2 = 0.0;
    for (double& v : y) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
  return y;
}

std::vector<double> sosfiltfilt(const SosFilter& f, std::span<const double> x, std::size_t padlen) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  const std::size_t pad = std::min(padlen, n - 1);
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  std::vector<double> y = sosfilt_init(f, ext, ext.front());
  std::reverse(y.begin(), y.end());
  y = sosfilt_init(f, y, y.front());
  std::reverse(y.begin(), y.end());
  return std::vector<double>(y.begin() + static_cast<std::ptrdiff_t>(pad),
                             y.begin() + static_cast<std::ptrdiff_t>(pad + n));
}

std::vector<double> running_median(std::span<const double> x, std::size_t window) {
  if (window < 3 || window % 2 == 0) throw ConfigError("running median: window must be odd and >= 3");
  const std::size_t n = x.size();
  const std::size_t half = window / 2;
  if (n == 0) return {};
  if (half >= n) {
    throw DataError("running median: window of " + std::to_string(window) + " samples exceeds signal of " +
                    std::to_string(n));
  }
  // numpy-style reflect: x[-k] = x[k], x[n-1+k] = x[n-1-k].
  auto at = [&](std::ptrdiff_t i) {
    if (i < 0) i = -i;
    if (i >= static_cast<std::ptrdiff_t>(n)) i = 2 * static_cast<std::ptrdiff_t>(n) - 2 - i;
    return x[static_cast<std::size_t>(i)];
  };
  std::vector<double> sorted;
  sorted.reserve(window);
  for (std::ptrdiff_t i = -static_cast<std::ptrdiff_t>(half); i <= static_cast<std::ptrdiff_t>(half); ++i) {
    sorted.push_back(at(i));
  }
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    out[t] = sorted[half];
    if (t + 1 == n) break;
    const double leaving = at(static_cast<std::ptrdiff_t>(t) - static_cast<std::ptrdiff_t>(half));
    const double entering = at(static_cast<std::ptrdiff_t>(t + half + 1));
    sorted.erase(std::lower_bound(sorted.begin(), sorted.end(), leaving));
    sorted.insert(std::upper_bound(sorted.begin(), sorted.end(), entering), entering);
  }
  return out;
}

}  // namespace dsp

using dsp::FilterSpec;

namespace {

// Padding long enough for the slowest pole to settle: three time
// constants of the lowest band edge (band-pass) or of the notch bandwidth.
std::size_t default_padlen(const FilterSpec& spec, double fs) {
  if (spec.kind == FilterSpec::Kind::bandpass) {
    return static_cast<std::size_t>(std::ceil(3.0 * fs / spec.low_hz));
  }
  return static_cast<std::size_t>(std::ceil(3.0 * fs * spec.quality / (std::numbers::pi * spec.center_hz)));
}

}  // namespace

EegRecording apply_filter(const EegRecording& rec, const FilterSpec& spec) {
  rec.validate();
  const dsp::SosFilter f = dsp::design(spec, rec.sample_rate);
  const std::size_t pad = default_padlen(spec, rec.sample_rate);
  EegRecording out = rec;
  for (auto& ch : out.channels) ch = dsp::sosfiltfilt(f, ch, pad);
  return out;
}

EegRecording bandpass(const EegRecording& rec, double low_hz, double high_hz, int order) {
  FilterSpec spec;
  spec.kind = FilterSpec::Kind::bandpass;
  spec.low_hz = low_hz;
  spec.high_hz = high_hz;
  spec.order = order;
  return apply_filter(rec, spec);
}

EegRecording notch(const EegRecording& rec, double center_hz, double quality) {
  FilterSpec spec;
  spec.kind = FilterSpec::Kind::notch;
  spec.center_hz = center_hz;
  spec.quality = quality;
  return apply_filter(rec, spec);
}

EegRecording notch50(const EegRecording& rec, double quality) { return notch(rec, 50.0, quality); }

EegRecording median_baseline(const EegRecording& rec, double window_s) {
  rec.validate();
  auto window = static_cast<std::size_t>(std::ceil(window_s * rec.sample_rate));
  if (window % 2 == 0) ++window;
  if (!(window_s > 0.0) || window < 3) {
    throw ConfigError("median baseline: window of " + std::to_string(window_s) + " s is shorter than 3 samples");
  }
  EegRecording out = rec;
  for (auto& ch : out.channels) {
    const auto med = dsp::running_median(ch, window);
    for (std::size_t i = 0; i < ch.size(); ++i) ch[i] -= med[i];
  }
  return out;
}

EegRecording preprocess(const EegRecording& rec, const PreprocessConfig& c) {
  EegRecording out = bandpass(rec, c.bandpass_low_hz, c.bandpass_high_hz, c.bandpass_order);
  out = notch(out, c.notch_hz, c.notch_q);
  return median_baseline(out, c.median_window_s);
}

PsdResult welch_psd(const EegRecording& rec, double segment_s, double overlap_fraction) {
  rec.validate();
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0)) throw ConfigError("welch: overlap must be in [0, 1)");
  const auto nper = static_cast<std::size_t>(std::llround(segment_s * rec.sample_rate));
  if (nper < 2) throw ConfigError("welch: segment shorter than two samples");
  if (nper > rec.num_samples()) {
    throw DataError("welch: segment of " + std::to_string(nper) + " samples exceeds recording of " +
                    std::to_string(rec.num_samples()));
  }
  const auto noverlap = static_cast<std::size_t>(std::floor(static_cast<double>(nper) * overlap_fraction));
  const std::size_t step = nper - noverlap;

  std::vector<double> window(nper);
  double wss = 0.0;
  for (std::size_t i = 0; i < nper; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(nper));
    wss += window[i] * window[i];
  }
  const std::size_t bins = nper / 2 + 1;
  PsdResult res;
  res.frequencies.resize(bins);
  for (std::size_t k = 0; k < bins; ++k) res.frequencies[k] = static_cast<double>(k) * rec.sample_rate / nper;

  std::vector<double> seg(nper);
  for (const auto& ch : rec.channels) {
    std::vector<double> acc(bins, 0.0);
    std::size_t count = 0;
    for (std::size_t start = 0; start + nper <= ch.size(); start += step) {
      double mu = 0.0;
      for (std::size_t i = 0; i < nper; ++i) mu += ch[start + i];
      mu /= static_cast<double>(nper);
      for (std::size_t i = 0; i < nper; ++i) seg[i] = (ch[start + i] - mu) * window[i];
      const auto spec = fft::rfft(seg);
      for (std::size_t k = 0; k < bins; ++k) acc[k] += std::norm(spec[k]);
      ++count;
    }
    const double norm = 1.0 / (rec.sample_rate * wss * static_cast<double>(count));
    for (std::size_t k = 0; k < bins; ++k) {
      const bool unpaired = (k == 0) || (nper % 2 == 0 && k == bins - 1);
      acc[k] *= norm * (unpaired ? 1.0 : 2.0);
    }
    res.power.push_back(std::move(acc));
  }
  return res;
}

std::vector<std::size_t> decimate_frames(std::span<const std::size_t> frame_indices, std::size_t factor) {
  if (factor == 0) throw ConfigError("decimate: factor must be positive");
  for (std::size_t i = 1; i < frame_indices.size(); ++i) {
    if (frame_indices[i] <= frame_indices[i - 1]) throw ContractError("decimate: frame indices must be strictly increasing");
  }
  std::vector<std::size_t> out;
  out.reserve(frame_indices.size() / factor + 1);
  for (std::size_t i = 0; i < frame_indices.size(); i += factor) out.push_back(frame_indices[i]);
  return out;
}

}  // namespace evf
