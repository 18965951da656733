#pragma once

#include "siamfv/types.hpp"

namespace siamfv {

// Soft assignment of one descriptor to every component, computed in the log
// domain with max-subtraction.
Vector posterior(const Eigen::Ref<const Vector>& x, const GmmModel& gmm,
                 PosteriorMode mode = PosteriorMode::kUnweighted);

// T x C matrix of posteriors, one row per descriptor.
Matrix assignments(const LocalDescriptorSet& descriptors, const GmmModel& gmm,
                   PosteriorMode mode = PosteriorMode::kUnweighted);

// Mean-gradient Fisher vector before normalization, cluster-major:
//   zeta_jk = 1/(T sqrt(w_j)) sum_t tau_tj (x_tk - mu_jk) / sigma_jk
Vector fv_unnormalized(const LocalDescriptorSet& descriptors, const GmmModel& gmm,
                       PosteriorMode mode = PosteriorMode::kUnweighted);

// L2 normalization. Throws Error("degenerate Fisher vector") on a zero vector.
FisherVector fv_normalize(Vector raw);

FisherVector fv_encode(const LocalDescriptorSet& descriptors, const GmmModel& gmm,
                       PosteriorMode mode = PosteriorMode::kUnweighted);

namespace detail {

// Parameter-level forms used by the optimizer and the finite-difference
// oracle, where the weights may sit off the simplex.
void posterior_row(const Eigen::Ref<const Vector>& x, const GmmParams& params,
                   PosteriorMode mode, Eigen::Ref<Vector> out);
Matrix assignments(const Matrix& descriptors, const GmmParams& params, PosteriorMode mode);
Vector fv_unnormalized(const Matrix& descriptors, const GmmParams& params, PosteriorMode mode);

void check_dims(const Matrix& descriptors, const GmmParams& params);

}  // namespace detail
}  // namespace siamfv
