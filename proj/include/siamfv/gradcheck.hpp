#pragma once

#include "siamfv/fv_grad.hpp"
#include "siamfv/siamese.hpp"
#include "siamfv/types.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <string>

namespace siamfv {

// Families reported by the check.
inline constexpr const char* kFamilyOmega = "omega";
inline constexpr const char* kFamilyMu = "mu";
inline constexpr const char* kFamilySigma = "sigma";
inline constexpr const char* kFamilyX = "x";
inline constexpr const char* kFamilyNormalized = "normalized";
inline constexpr const char* kFamilyLoss = "loss";
inline constexpr const char* kFamilyBackbone = "backbone";

// Relative errors are measured on derivative vectors: d f / d phi for each
// scalar parameter phi of a vector-valued map (the Fisher-vector families),
// and the gradient over each parameter block for the scalar pair loss.
// max_elementwise_rel_error is the same measure applied entry by entry; it is
// informational because central differences cannot resolve entries much
// smaller than eps * |f| / h.
struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_elementwise_rel_error = 0.0;
  std::string worst_parameter;
  std::map<std::string, double> per_family_errors;
  std::size_t compared = 0;
};

// One random problem: a mixture, a pair of raw-patch sets pushed through an
// affine backbone, and a pair label/margin placed away from the hinge kink.
struct GradCheckInstance {
  GmmParams gmm;
  BackboneModel backbone;
  Matrix patches_left;
  Matrix patches_right;
  PairLabel label = PairLabel::kMatching;
  double margin = 0.8;
  PosteriorMode mode = PosteriorMode::kUnweighted;
};

GradCheckInstance make_gradcheck_instance(std::size_t clusters, std::size_t dim, std::size_t count,
                                          std::uint64_t seed, PosteriorMode mode = PosteriorMode::kUnweighted);

// Everything the check compares, laid out the same way for the analytic and
// the numeric side. Jacobian rows index parameters (see FvGradients).
struct CheckedGradients {
  FvGradients raw;         // left branch, raw vector
  FvGradients normalized;  // left branch, normalized vector
  PairGrads loss;
  BackboneGrads backbone;
};

CheckedGradients analytic_gradients(const GradCheckInstance& instance);
// Central differences with step h * max(|phi|, 1).
CheckedGradients numeric_gradients(const GradCheckInstance& instance, double step);

// Relative error |a - n| / max(|a|, |n|, 1e-12) per derivative vector,
// reduced to a maximum per family.
GradCheckReport compare_gradients(const CheckedGradients& analytic, const CheckedGradients& numeric);

using AnalyticSource = std::function<CheckedGradients(const GradCheckInstance&)>;

GradCheckReport finite_diff_check(const GradCheckInstance& instance, double step = 1e-6,
                                  const AnalyticSource& analytic = analytic_gradients);

}  // namespace siamfv
