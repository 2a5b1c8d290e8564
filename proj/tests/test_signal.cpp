#include "support.hpp"

#include "scmm/errors.hpp"
#include "scmm/signal.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace scmm;

TEST_SUITE("signal") {

TEST_CASE("butterworth bandpass matches scipy") {
  // scipy.signal.butter(4, [4, 8], 'bandpass', fs=200, output='sos') + sosfreqz
  const auto sections = butterworth_bandpass(4.0, 8.0, 200.0, 4);
  CHECK(sections.size() == 4);
  const std::pair<double, double> reference[] = {
      {2.0, 0.006720389373365},  {4.0, 0.707106781186549},  {5.0, 0.999883651275123},
      {5.6, 0.999999999999625},  {6.0, 0.999999728724920},  {8.0, 0.707106781186544},
      {12.0, 0.032709184440787}, {30.0, 0.000271712815154},
  };
  for (const auto& [f, mag] : reference) {
    CHECK(magnitude_response(sections, f, 200.0) == doctest::Approx(mag).epsilon(1e-9));
  }
}

TEST_CASE("zero-phase filtering matches scipy sosfiltfilt") {
  // scipy.signal.sosfiltfilt(sos, x, padlen=60) for the signal below
  const auto sections = butterworth_bandpass(4.0, 8.0, 200.0, 4);
  Eigen::VectorXd x(300);
  for (int i = 0; i < 300; ++i) x[i] = std::sin(0.1 * i) + 0.5 * std::cos(0.37 * i) + 0.01 * i + 1.0;
  const Eigen::VectorXd y = filtfilt(sections, x, 60);
  REQUIRE(y.size() == 300);
  const std::pair<int, double> reference[] = {
      {0, 0.020292530623442},   {1, -0.029750281530283},  {50, -0.018995207900090},
      {150, 0.002915112567324}, {298, 0.062317168342167}, {299, 0.057042466603791},
  };
  for (const auto& [i, v] : reference) CHECK(y[i] == doctest::Approx(v).epsilon(1e-9).scale(1.0));
}

TEST_CASE("bandpass keeps the recording length and channel count") {
  Rng rng(1);
  RawRecording r;
  r.sample_rate = 200.0;
  r.samples = scmm::test::random_matrix(3, 1000, rng);
  const auto out = bandpass(r, standard_bands()[2]);
  CHECK(out.samples.rows() == 3);
  CHECK(out.samples.cols() == 1000);
  CHECK_THROWS_AS(bandpass(r, BandSpec{"bad", 30.0, 120.0}), ConfigError);
}

TEST_CASE("segmentation drops the tail and keeps order") {
  RawRecording r;
  r.sample_rate = 10.0;
  r.samples = RowMatrix(1, 35);
  for (Index i = 0; i < 35; ++i) r.samples(0, i) = static_cast<double>(i);
  const auto windows = segment(r, 1.0);
  REQUIRE(windows.size() == 3);
  CHECK(windows[0].samples(0, 0) == 0.0);
  CHECK(windows[2].samples(0, 9) == 29.0);
  CHECK_THROWS_AS(segment(r, 0.01), ConfigError);
}

TEST_CASE("differential entropy of known samples") {
  const std::vector<double> s{1.0, -1.0, 1.0, -1.0};  // population variance 1
  CHECK(differential_entropy(s) == doctest::Approx(0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e)));
  std::vector<double> doubled;
  for (double v : s) doubled.push_back(2.0 * v + 5.0);
  CHECK(differential_entropy(doubled) - differential_entropy(s) == doctest::Approx(std::log(2.0)));
  CHECK_THROWS_AS(differential_entropy(std::vector<double>{3.0, 3.0, 3.0}), DomainError);
  CHECK_THROWS_AS(differential_entropy(std::vector<double>{1.0}), DomainError);
}

TEST_CASE("band noise has the requested variance") {
  Rng rng(7);
  const auto bands = standard_bands();
  for (const auto& band : bands) {
    const Eigen::VectorXd x = synthesize_band_noise(band, 2.5, 200.0, 4000, rng);
    const double var = (x.array() - x.mean()).square().mean();
    CHECK(var == doctest::Approx(2.5).epsilon(1e-9));
  }
}

TEST_CASE("extracted DE recovers the per-band variance") {
  Rng rng(11);
  const auto bands = standard_bands();
  RawRecording r;
  r.sample_rate = 200.0;
  const Index length = 200 * 200;
  r.samples = RowMatrix::Zero(2, length);
  std::vector<double> variance{0.5, 1.0, 2.0, 4.0, 8.0};
  for (Index c = 0; c < 2; ++c) {
    for (std::size_t b = 0; b < bands.size(); ++b) {
      r.samples.row(c) += synthesize_band_noise(bands[b], variance[b], 200.0, length, rng).transpose();
    }
  }
  const auto features = extract_features(r, bands, 100.0);  // 2×10⁴ samples per window
  REQUIRE(features.size() == 2);
  for (const auto& f : features) {
    REQUIRE(f.band_count() == 5);
    for (Index c = 0; c < 2; ++c) {
      for (Index b = 0; b < 5; ++b) {
        const double expected =
            0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * variance[static_cast<std::size_t>(b)]);
        CHECK(std::abs(f.values(c, b) - expected) < 0.05);
      }
    }
  }
}

}  // TEST_SUITE
