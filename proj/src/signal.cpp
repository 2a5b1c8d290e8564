#include "scmm/signal.hpp"

#include "scmm/errors.hpp"

#include <cmath>
#include <complex>
#include <numbers>

namespace scmm {

namespace {

using Complex = std::complex<double>;

void validate_band(const BandSpec& band, double sample_rate) {
  if (!(sample_rate > 0.0)) throw ConfigError("sample rate must be positive");
  if (!(band.low > 0.0 && band.low < band.high && band.high < sample_rate / 2.0)) {
    throw ConfigError("band '" + band.name + "' [" + std::to_string(band.low) + ", " +
                      std::to_string(band.high) + "] Hz is not inside (0, " +
                      std::to_string(sample_rate / 2.0) + ") Hz");
  }
}

// Response of one section at z = e^{jω}.
Complex section_response(const Biquad& s, Complex z) {
  const Complex zi = 1.0 / z;
  const Complex num = s.b[0] + s.b[1] * zi + s.b[2] * zi * zi;
  const Complex den = 1.0 + s.a[0] * zi + s.a[1] * zi * zi;
  return num / den;
}

// Direct-form II transposed, in place, starting from state (z1, z2).
void run_section(const Biquad& s, Eigen::VectorXd& x, double z1, double z2) {
  for (Index n = 0; n < x.size(); ++n) {
    const double in = x[n];
    const double out = s.b[0] * in + z1;
    z1 = s.b[1] * in - s.a[0] * out + z2;
    z2 = s.b[2] * in - s.a[1] * out;
    x[n] = out;
  }
}

// Runs the cascade with each section's state set to its steady-state response
// to a constant input equal to the first sample.
void run_cascade(std::span<const Biquad> sections, Eigen::VectorXd& x) {
  if (x.size() == 0) return;
  double level = x[0];
  for (const auto& s : sections) {
    const double dc_gain = (s.b[0] + s.b[1] + s.b[2]) / (1.0 + s.a[0] + s.a[1]);
    const double out = dc_gain * level;
    const double z2 = s.b[2] * level - s.a[1] * out;
    const double z1 = out - s.b[0] * level;
    run_section(s, x, z1, z2);
    level = out;
  }
}

}  // namespace

std::vector<BandSpec> standard_bands() {
  return {{"delta", 1.0, 4.0}, {"theta", 4.0, 8.0}, {"alpha", 8.0, 14.0},
          {"beta", 14.0, 31.0}, {"gamma", 31.0, 50.0}};
}

std::vector<Biquad> butterworth_bandpass(double low_hz, double high_hz, double sample_rate,
                                         int order) {
  validate_band({"", low_hz, high_hz}, sample_rate);
  if (order < 1) throw ConfigError("Butterworth order must be positive");
  const double fs2 = 2.0 * sample_rate;
  // Prewarped analog edges.
  const double w1 = fs2 * std::tan(std::numbers::pi * low_hz / sample_rate);
  const double w2 = fs2 * std::tan(std::numbers::pi * high_hz / sample_rate);
  const double w0_sq = w1 * w2;
  const double bw = w2 - w1;

  std::vector<Complex> poles;
  for (int k = 1; k <= order; ++k) {
    const double theta = std::numbers::pi * (2.0 * k + order - 1) / (2.0 * order);
    const Complex p = std::polar(1.0, theta);
    // Lowpass -> bandpass: each prototype pole splits into two.
    const Complex half = p * bw / 2.0;
    const Complex root = std::sqrt(half * half - w0_sq);
    for (const Complex s : {half + root, half - root}) {
      poles.push_back((fs2 + s) / (fs2 - s));  // bilinear transform
    }
  }

  // Pair each pole in the upper half plane with its conjugate. Zeros at z = ±1.
  std::vector<Biquad> sections;
  for (const Complex& p : poles) {
    if (p.imag() <= 0.0) continue;
    sections.push_back({{1.0, 0.0, -1.0}, {-2.0 * p.real(), std::norm(p)}});
  }
  // Real poles only appear for extremely wide bands; pair them in order.
  std::vector<double> real_poles;
  for (const Complex& p : poles) {
    if (p.imag() == 0.0) real_poles.push_back(p.real());
  }
  for (std::size_t i = 0; i + 1 < real_poles.size(); i += 2) {
    sections.push_back({{1.0, 0.0, -1.0},
                        {-(real_poles[i] + real_poles[i + 1]), real_poles[i] * real_poles[i + 1]}});
  }

  const double center = sample_rate / std::numbers::pi * std::atan(std::sqrt(w0_sq) / fs2);
  const double gain = magnitude_response(sections, center, sample_rate);
  const double per_section = std::pow(gain, -1.0 / static_cast<double>(sections.size()));
  for (auto& s : sections) {
    for (double& c : s.b) c *= per_section;
  }
  return sections;
}

double magnitude_response(std::span<const Biquad> sections, double freq_hz, double sample_rate) {
  const Complex z = std::polar(1.0, 2.0 * std::numbers::pi * freq_hz / sample_rate);
  Complex h = 1.0;
  for (const auto& s : sections) h *= section_response(s, z);
  return std::abs(h);
}

Eigen::VectorXd filtfilt(std::span<const Biquad> sections, const Eigen::Ref<const Eigen::VectorXd>& x,
                         Index padlen) {
  const Index n = x.size();
  if (n == 0) return x;
  padlen = std::clamp<Index>(padlen, 0, n - 1);
  Eigen::VectorXd ext(n + 2 * padlen);
  for (Index i = 0; i < padlen; ++i) {
    ext[i] = 2.0 * x[0] - x[padlen - i];
    ext[n + padlen + i] = 2.0 * x[n - 1] - x[n - 2 - i];
  }
  ext.segment(padlen, n) = x;
  run_cascade(sections, ext);
  ext.reverseInPlace();
  run_cascade(sections, ext);
  ext.reverseInPlace();
  return ext.segment(padlen, n);
}

RawRecording bandpass(const RawRecording& recording, const BandSpec& band) {
  validate_band(band, recording.sample_rate);
  const auto sections = butterworth_bandpass(band.low, band.high, recording.sample_rate, 4);
  // Long enough to cover the slowest band's transient (about three periods of the lower edge).
  const auto padlen = static_cast<Index>(
      std::max(3.0 * (2.0 * static_cast<double>(sections.size()) + 1.0),
               std::ceil(3.0 * recording.sample_rate / band.low)));
  RawRecording out = recording;
  for (Index c = 0; c < recording.channel_count(); ++c) {
    const Eigen::VectorXd row = recording.samples.row(c).transpose();
    out.samples.row(c) = filtfilt(sections, row, padlen).transpose();
  }
  return out;
}

std::vector<RawRecording> segment(const RawRecording& recording, double window_seconds) {
  const auto window = static_cast<Index>(std::llround(window_seconds * recording.sample_rate));
  if (!(window_seconds > 0.0) || window < 1) {
    throw ConfigError("segment: window must span at least one sample");
  }
  std::vector<RawRecording> windows;
  const Index count = recording.length() / window;
  windows.reserve(static_cast<std::size_t>(count));
  for (Index w = 0; w < count; ++w) {
    windows.push_back({recording.samples.middleCols(w * window, window), recording.sample_rate,
                       recording.channel_names});
  }
  return windows;
}

double differential_entropy(std::span<const double> samples) {
  if (samples.size() < 2) throw DomainError("differential_entropy: need at least 2 samples");
  const Eigen::Map<const Eigen::ArrayXd> x(samples.data(), static_cast<Index>(samples.size()));
  const double mean = x.mean();
  const double variance = (x - mean).square().mean();
  if (!(variance > 0.0)) {
    throw DomainError("differential_entropy: zero variance (constant segment)");
  }
  return 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * variance);
}

std::vector<FeatureMatrix> extract_features(const RawRecording& recording,
                                            std::span<const BandSpec> bands,
                                            double window_seconds) {
  if (bands.empty()) throw ConfigError("extract_features: no bands");
  const auto window = static_cast<Index>(std::llround(window_seconds * recording.sample_rate));
  if (!(window_seconds > 0.0) || window < 1) {
    throw ConfigError("extract_features: window must span at least one sample");
  }
  const Index count = recording.length() / window;
  const Index channels = recording.channel_count();
  std::vector<FeatureMatrix> features(static_cast<std::size_t>(count));
  for (auto& f : features) f.values.resize(channels, static_cast<Index>(bands.size()));

  for (std::size_t b = 0; b < bands.size(); ++b) {
    const RawRecording filtered = bandpass(recording, bands[b]);
    for (Index w = 0; w < count; ++w) {
      for (Index c = 0; c < channels; ++c) {
        const Eigen::VectorXd seg = filtered.samples.row(c).segment(w * window, window).transpose();
        features[static_cast<std::size_t>(w)].values(c, static_cast<Index>(b)) =
            differential_entropy({seg.data(), static_cast<std::size_t>(seg.size())});
      }
    }
  }
  return features;
}

Eigen::VectorXd synthesize_band_noise(const BandSpec& band, double variance, double sample_rate,
                                      Index length, Rng& rng, double margin) {
  validate_band(band, sample_rate);
  if (length < 4) throw ConfigError("synthesize_band_noise: length must be at least 4 samples");
  if (!(variance >= 0.0)) throw DomainError("synthesize_band_noise: negative variance");
  const double resolution = sample_rate / static_cast<double>(length);
  const double width = band.high - band.low;
  const double lo = band.low + margin * width;
  const double hi = band.high - margin * width;
  std::vector<Index> bins;
  for (auto k = static_cast<Index>(std::ceil(lo / resolution)); k * resolution <= hi; ++k) {
    if (k > 0 && 2 * k < length) bins.push_back(k);
  }
  if (bins.empty()) {
    const auto k = std::clamp<Index>(
        static_cast<Index>(std::llround(0.5 * (band.low + band.high) / resolution)), 1,
        (length - 1) / 2);
    bins.push_back(k);
  }
  const double amplitude = std::sqrt(2.0 * variance / static_cast<double>(bins.size()));
  Eigen::VectorXd x = Eigen::VectorXd::Zero(length);
  for (Index k : bins) {
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double omega = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(length);
    for (Index n = 0; n < length; ++n) x[n] += amplitude * std::cos(omega * static_cast<double>(n) + phase);
  }
  return x;
}

}  // namespace scmm
