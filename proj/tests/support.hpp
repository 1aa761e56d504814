#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hierreconc/distributions.hpp"
#include "hierreconc/hierarchy.hpp"
#include "hierreconc/random.hpp"

namespace testsupport {

using namespace hierreconc;

inline std::vector<std::string> labels_for(Eigen::Index uppers, Eigen::Index bottoms) {
  std::vector<std::string> out;
  for (Eigen::Index i = 0; i < uppers; ++i) out.push_back("U" + std::to_string(i + 1));
  for (Eigen::Index j = 0; j < bottoms; ++j) out.push_back("B" + std::to_string(j + 1));
  return out;
}

inline Hierarchy minimal_hierarchy() {
  Eigen::MatrixXi a(1, 2);
  a << 1, 1;
  return Hierarchy(a, {"U", "B1", "B2"});
}

inline int uniform_int(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(rng.uniform() * static_cast<double>(hi - lo + 1));
}

/// Random 0/1 aggregation matrix with no all-zero row.
inline Hierarchy random_hierarchy(Rng& rng, int max_bottom, int max_upper) {
  const int m = uniform_int(rng, 1, max_bottom);
  const int k = uniform_int(rng, 1, max_upper);
  Eigen::MatrixXi a = Eigen::MatrixXi::Zero(k, m);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < m; ++j) {
      a(i, j) = rng.uniform() < 0.6 ? 1 : 0;
    }
    a(i, uniform_int(rng, 0, m - 1)) = 1;
  }
  return Hierarchy(a, labels_for(k, m));
}

inline Eigen::MatrixXd random_psd(Rng& rng, Eigen::Index d, double ridge = 0.05) {
  Eigen::MatrixXd l(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      l(i, j) = rng.normal();
    }
  }
  Eigen::MatrixXd cov = l * l.transpose() / static_cast<double>(d) + ridge * Eigen::MatrixXd::Identity(d, d);
  return 0.5 * (cov + cov.transpose());
}

inline Eigen::VectorXd random_vector(Rng& rng, Eigen::Index d, double scale) {
  Eigen::VectorXd v(d);
  for (Eigen::Index i = 0; i < d; ++i) v[i] = scale * rng.normal();
  return v;
}

/// Probabilities on {0, ..., size-1}, each at least `floor`.
inline std::vector<double> random_probs(Rng& rng, std::size_t size, double floor = 0.0) {
  std::vector<double> p(size);
  double total = 0.0;
  for (auto& x : p) {
    x = floor + rng.uniform();
    total += x;
  }
  for (auto& x : p) x /= total;
  return p;
}

inline CountDistribution random_count(Rng& rng, int max_support) {
  switch (uniform_int(rng, 0, 3)) {
    case 0: return Poisson(0.2 + 2.0 * rng.uniform());
    case 1: return NegativeBinomial(0.2 + 2.0 * rng.uniform(), 1.5 * rng.uniform());
    case 2: return Bernoulli(0.05 + 0.9 * rng.uniform());
    default: return TabulatedPmf::on_range(random_probs(rng, static_cast<std::size_t>(uniform_int(rng, 1, max_support))));
  }
}

class Stopwatch {
 public:
  [[nodiscard]] double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace testsupport
