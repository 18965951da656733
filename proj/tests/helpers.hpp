#pragma once

#include "siamfv/types.hpp"

#include <cmath>
#include <random>

namespace siamfv::test {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline GmmModel random_gmm(std::size_t c, std::size_t d, std::mt19937_64& rng, double mean_scale = 1.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector w(static_cast<Eigen::Index>(c));
  for (Eigen::Index j = 0; j < w.size(); ++j) w[j] = 0.2 + u(rng);
  w /= w.sum();
  Matrix mu = random_matrix(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(d), rng, mean_scale);
  Matrix sigma(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < sigma.size(); ++i) sigma.data()[i] = 0.5 + u(rng);
  // Exact simplex up to rounding of the final division.
  w[w.size() - 1] = 1.0 - (w.sum() - w[w.size() - 1]);
  return GmmModel(w, mu, sigma);
}

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }
inline double max_abs(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

}  // namespace siamfv::test
