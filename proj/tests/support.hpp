#pragma once

#include "scmm/random.hpp"
#include "scmm/signal.hpp"
#include "scmm/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <unistd.h>

namespace scmm::test {

inline Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = true, double scale = 1.0) {
  Eigen::ArrayXd v(numel(shape));
  for (Index i = 0; i < v.size(); ++i) v[i] = scale * rng.normal();
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

inline RowMatrix random_matrix(Index rows, Index cols, Rng& rng) {
  RowMatrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

inline FeatureMatrix random_sample(Index channels, Index bands, Rng& rng) {
  FeatureMatrix x;
  x.values = random_matrix(channels, bands, rng);
  return x;
}

/// |a − n| / max(|a|, |n|, floor).
inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Largest relative error between backward() and central differences over
/// every element of every leaf.
inline double gradient_error(const std::vector<Tensor>& leaves, const std::function<Tensor()>& f,
                             double h = 1e-6, double floor = 1e-6) {
  for (auto leaf : leaves) leaf.zero_grad();
  backward(f());
  double worst = 0.0;
  for (auto leaf : leaves) {
    const Eigen::ArrayXd analytic = leaf.grad();
    auto& v = leaf.values_mut();
    for (Index i = 0; i < v.size(); ++i) {
      const double old = v[i];
      v[i] = old + h;
      const double up = f().item();
      v[i] = old - h;
      const double down = f().item();
      v[i] = old;
      worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * h), floor));
    }
  }
  return worst;
}

/// NT-Xent over 2B rows (row i and row i ± B are positives), written with
/// plain loops for use as an oracle.
inline double nt_xent(const RowMatrix& z, double tau) {
  const Index n = z.rows();
  const Index b = n / 2;
  std::vector<double> norms(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Index k = 0; k < z.cols(); ++k) s += z(i, k) * z(i, k);
    norms[static_cast<std::size_t>(i)] = std::sqrt(s);
  }
  auto sim = [&](Index i, Index j) {
    double dot = 0.0;
    for (Index k = 0; k < z.cols(); ++k) dot += z(i, k) * z(j, k);
    return dot / (norms[static_cast<std::size_t>(i)] * norms[static_cast<std::size_t>(j)]);
  };
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const Index pos = i < b ? i + b : i - b;
    double denom = 0.0;
    for (Index k = 0; k < n; ++k) {
      if (k != i) denom += std::exp(sim(i, k) / tau);
    }
    total += -std::log(std::exp(sim(i, pos) / tau) / denom);
  }
  return total / static_cast<double>(n);
}

/// Fresh directory under the system temp path, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("scmm_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string path() const { return path_.string(); }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace scmm::test
