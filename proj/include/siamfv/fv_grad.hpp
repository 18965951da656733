#pragma once

#include "siamfv/types.hpp"

#include <cstddef>

namespace siamfv {

struct TauPartials {
  double d_mu = 0.0;     // d tau_tj / d mu_jk
  double d_sigma = 0.0;  // d tau_tj / d sigma_jk
  double d_x = 0.0;      // d tau_tj / d x_tk (all numerators depend on x)
};

TauPartials tau_partials(const LocalDescriptorSet& descriptors, const GmmModel& gmm, std::size_t t,
                         std::size_t j, std::size_t k, PosteriorMode mode = PosteriorMode::kUnweighted);

// Dense Jacobians of a Fisher vector (raw or normalized). Rows index
// parameters, columns index the C*d output elements in cluster-major order.
// Blocks that were not requested are left empty.
struct FvGradients {
  std::size_t clusters = 0;
  std::size_t dim = 0;
  std::size_t count = 0;
  Matrix d_omega;  // C x Cd
  Matrix d_mu;     // Cd x Cd, row j*d + k
  Matrix d_sigma;  // Cd x Cd
  Matrix d_x;      // Td x Cd, row t*d + k
};

FvGradients fv_param_grads(const LocalDescriptorSet& descriptors, const GmmModel& gmm,
                           PosteriorMode mode = PosteriorMode::kUnweighted);
FvGradients fv_input_grads(const LocalDescriptorSet& descriptors, const GmmModel& gmm,
                           PosteriorMode mode = PosteriorMode::kUnweighted);
// All four blocks.
FvGradients fv_grads(const LocalDescriptorSet& descriptors, const GmmModel& gmm,
                     PosteriorMode mode = PosteriorMode::kUnweighted);

// Maps raw-vector Jacobians to Jacobians of raw/|raw|:
//   d zhat_i = (d zeta_i - zhat_i sum_l zhat_l d zeta_l) / |zeta|
// with the inner sum over every element. Throws on a zero vector.
FvGradients normalized_chain(const Vector& raw, const FvGradients& raw_grads);

// Gradient of a scalar objective with respect to mixture parameters.
struct GmmGrads {
  Vector weights;
  Matrix means;
  Matrix stddevs;

  static GmmGrads zeros(std::size_t clusters, std::size_t dim);
  GmmGrads& operator+=(const GmmGrads& other);
  bool all_finite() const;
};

// Forward state kept for the backward pass.
struct FvForward {
  Matrix tau;
  Vector raw;
  Vector normalized;
  double norm = 0.0;
};

struct FvBackward {
  GmmGrads gmm;
  Matrix x;  // T x d
};

namespace detail {

FvGradients fv_grads(const Matrix& descriptors, const GmmParams& params, PosteriorMode mode,
                     bool params_block, bool input_block);

// Throws Error("degenerate Fisher vector") when the raw vector is zero.
FvForward fv_forward(const Matrix& descriptors, const GmmParams& params, PosteriorMode mode);

// Vector-Jacobian product: pulls dL/d(normalized FV) back to the parameters
// and descriptors in O(T C d) without forming Jacobians.
FvBackward fv_backward(const Matrix& descriptors, const GmmParams& params, PosteriorMode mode,
                       const FvForward& forward, const Vector& upstream);

}  // namespace detail
}  // namespace siamfv
