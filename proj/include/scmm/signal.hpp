#pragma once

#include "scmm/random.hpp"
#include "scmm/tensor.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace scmm {

/// A C×F grid of per-channel, per-band differential-entropy features (nats).
struct FeatureMatrix {
  RowMatrix values;
  std::optional<int> label;
  int subject_id = 0;
  int session_id = 0;
  int trial_id = 0;

  Index channel_count() const { return values.rows(); }
  Index band_count() const { return values.cols(); }
};

/// Multi-channel time series, channel-major [C × T].
struct RawRecording {
  RowMatrix samples;
  double sample_rate = 0.0;
  std::vector<std::string> channel_names;

  Index channel_count() const { return samples.rows(); }
  Index length() const { return samples.cols(); }
};

struct BandSpec {
  std::string name;
  double low = 0.0;
  double high = 0.0;
};

/// Delta, Theta, Alpha, Beta, Gamma.
std::vector<BandSpec> standard_bands();

/// Second-order IIR section, a0 normalized to 1.
struct Biquad {
  std::array<double, 3> b;
  std::array<double, 2> a;  // a1, a2
};

/// Digital Butterworth bandpass as cascaded biquads.
///
/// `order` is the order of the analog lowpass prototype, so the bandpass has
/// 2·order poles (the scipy `butter(order, [lo, hi], 'bandpass')` convention).
/// Passband gain is normalized to 1 at the geometric band center.
std::vector<Biquad> butterworth_bandpass(double low_hz, double high_hz, double sample_rate,
                                         int order = 4);

/// Magnitude response of a biquad cascade at `freq_hz`.
double magnitude_response(std::span<const Biquad> sections, double freq_hz, double sample_rate);

/// Zero-phase (forward-backward) filtering with odd-reflection padding and
/// steady-state initial conditions.
Eigen::VectorXd filtfilt(std::span<const Biquad> sections, const Eigen::Ref<const Eigen::VectorXd>& x,
                         Index padlen);

/// 4th-order zero-phase Butterworth bandpass of every channel; length preserved.
RawRecording bandpass(const RawRecording& recording, const BandSpec& band);

/// floor(T / window) non-overlapping windows in temporal order; the tail is dropped.
std::vector<RawRecording> segment(const RawRecording& recording, double window_seconds);

/// ½·ln(2πe·σ²) with σ² the population variance.
double differential_entropy(std::span<const double> samples);

/// One C×F DE matrix per window; each band is filtered over the whole recording
/// before segmentation.
std::vector<FeatureMatrix> extract_features(const RawRecording& recording,
                                            std::span<const BandSpec> bands,
                                            double window_seconds);

/// Gaussian-like band-limited noise of exactly the requested variance.
///
/// Sums equal-amplitude, random-phase sinusoids at every frequency that
/// completes an integer number of cycles in `length` samples and lies in the
/// central (1 − 2·margin) part of the band. Over the full length the
/// population variance equals `variance` up to rounding.
Eigen::VectorXd synthesize_band_noise(const BandSpec& band, double variance, double sample_rate,
                                      Index length, Rng& rng, double margin = 0.2);

}  // namespace scmm
