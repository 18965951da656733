#pragma once

#include "siamfv/types.hpp"

#include <cstdint>
#include <vector>

namespace siamfv {

struct EmConfig {
  std::size_t num_clusters = 8;
  std::size_t max_iters = 100;
  double tol = 1e-6;  // stop when the relative log-likelihood gain drops below this
  std::uint64_t seed = 0;
  double variance_floor = 1e-3;  // applied to sigma^2
};

struct EmResult {
  GmmModel model;
  // Log-likelihood of every parameter state visited, ending with the returned
  // model. reseeded[i] marks a collapsed cluster being re-seeded after state i.
  std::vector<double> log_likelihood;
  std::vector<bool> reseeded;
  std::size_t iterations = 0;
  bool converged = false;
};

// Diagonal GMM by EM with k-means++ seeding. Rows are sorted before fitting so
// the result does not depend on descriptor order. Throws Error("insufficient
// data") when there are fewer descriptors than clusters.
EmResult em_fit_traced(const Matrix& descriptors, const EmConfig& cfg);
GmmModel em_fit(const Matrix& descriptors, const EmConfig& cfg);

// Sum over descriptors of log sum_j w_j N(x; mu_j, diag sigma_j^2), in nats.
double log_likelihood(const Matrix& descriptors, const GmmModel& gmm);

}  // namespace siamfv
