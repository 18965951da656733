#pragma once

// Data-parallel inner loops. Each kernel has an OpenMP implementation in
// siamfv::kernels and a plain serial counterpart in siamfv::kernels::reference
// that follows the formulas term by term. The reference versions are kept for
// the test suite and the benchmark; library code calls the parallel ones.

#include "siamfv/types.hpp"

#include <span>

namespace siamfv::kernels {

// Normalized Fisher vectors of many descriptor sets, one row per set.
// Throws Error("degenerate Fisher vector") naming the first bad item.
Matrix encode_batch(std::span<const Matrix> sets, const GmmParams& params, PosteriorMode mode);

// Jacobians of the raw Fisher vector. Rows index parameters, columns index
// output elements (j, k) in cluster-major order.
struct ParamJacobian {
  Matrix d_omega;  // C x Cd
  Matrix d_mu;     // Cd x Cd
  Matrix d_sigma;  // Cd x Cd
};

// tau is the T x C assignment matrix for `descriptors`.
ParamJacobian param_jacobian(const Matrix& descriptors, const GmmParams& params,
                             PosteriorMode mode, const Matrix& tau);
// (T d) x Cd, row t*d + k' holds d zeta / d x_tk'.
Matrix input_jacobian(const Matrix& descriptors, const GmmParams& params,
                      PosteriorMode mode, const Matrix& tau);

// Q x G matrix of squared Euclidean distances.
Matrix squared_distances(const Matrix& queries, const Matrix& gallery);

// Standard-GMM E-step: responsibilities (T x C, with mixture weights and
// normalization constants) and the per-descriptor log density.
struct EStep {
  Matrix responsibilities;
  Vector log_density;
};
EStep em_estep(const Matrix& descriptors, const GmmParams& params);

namespace reference {

Matrix encode_batch(std::span<const Matrix> sets, const GmmParams& params, PosteriorMode mode);
ParamJacobian param_jacobian(const Matrix& descriptors, const GmmParams& params,
                             PosteriorMode mode, const Matrix& tau);
Matrix input_jacobian(const Matrix& descriptors, const GmmParams& params,
                      PosteriorMode mode, const Matrix& tau);
Matrix squared_distances(const Matrix& queries, const Matrix& gallery);
EStep em_estep(const Matrix& descriptors, const GmmParams& params);

}  // namespace reference
}  // namespace siamfv::kernels
