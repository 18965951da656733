#pragma once

#include "siamfv/types.hpp"

#include <span>
#include <string>
#include <vector>

namespace siamfv {

enum class ProjectionMethod : unsigned char { kPca = 0, kLda = 1 };

// y = normalize(scales .* (basis^T (x - mean))).
struct ProjectionModel {
  ProjectionMethod method = ProjectionMethod::kPca;
  Vector mean;    // D
  Matrix basis;   // D x m, unit columns
  Vector scales;  // m, strictly positive

  std::size_t input_dim() const { return static_cast<std::size_t>(basis.rows()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(basis.cols()); }
};

inline constexpr double kWhiteningEpsilon = 1e-10;

// Top-m principal axes of the rows (covariance normalized by N), whitened with
// 1 / sqrt(lambda + 1e-10). Throws Error("insufficient rank") when fewer than
// m directions carry variance.
ProjectionModel fit_pca_whiten(const Matrix& vectors, std::size_t m);

struct LdaOptions {
  // Added to the within-class scatter as ridge * trace / rank. Zero gives the
  // textbook discriminant and fails on a singular scatter.
  double ridge = 1e-6;
};

// Fisher discriminant with within-class whitening. Classes are taken in order
// of first appearance, so renaming labels leaves the model unchanged. Throws
// Error("LDA rank bound exceeded") when m exceeds classes - 1.
ProjectionModel fit_lda_whiten(const Matrix& vectors, std::span<const int> labels, std::size_t m,
                               const LdaOptions& options = {});

// Throws Error("degenerate projection") when the projected vector is zero.
Vector project(const Vector& x, const ProjectionModel& model);
Matrix project_batch(const Matrix& rows, const ProjectionModel& model);

// Projection models must be fitted on a dataset disjoint from the one being
// evaluated. Throws Error naming the shared tag otherwise.
void require_disjoint_datasets(const std::vector<std::string>& fit_tags, const std::vector<std::string>& eval_tags);

}  // namespace siamfv
