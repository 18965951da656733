#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <utility>

namespace siamfv {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline constexpr double kStddevFloor = 1e-3;

// How soft assignments are computed.
//  kUnweighted: softmax of -1/2 (x-mu)^T S^-1 (x-mu), no mixture weight and
//              no determinant term.
//  kStandard:   the usual GMM posterior w_j N(x; mu_j, S_j) / sum_i (...).
enum class PosteriorMode { kUnweighted, kStandard };

// Unconstrained mixture parameters. The numeric kernels and the optimizer
// work on this pack directly; GmmModel is the validated form.
struct GmmParams {
  Vector weights;  // C
  Matrix means;    // C x d
  Matrix stddevs;  // C x d

  std::size_t num_clusters() const { return static_cast<std::size_t>(weights.size()); }
  std::size_t dim() const { return static_cast<std::size_t>(means.cols()); }
};

// Diagonal Gaussian mixture. Immutable once constructed; the constructor
// rejects weights off the simplex (1e-12) and stddevs below kStddevFloor.
class GmmModel {
 public:
  explicit GmmModel(GmmParams params);
  GmmModel(Vector weights, Matrix means, Matrix stddevs)
      : GmmModel(GmmParams{std::move(weights), std::move(means), std::move(stddevs)}) {}

  std::size_t num_clusters() const { return params_.num_clusters(); }
  std::size_t dim() const { return params_.dim(); }
  std::size_t fv_size() const { return num_clusters() * dim(); }

  const Vector& weights() const { return params_.weights; }
  const Matrix& means() const { return params_.means; }
  const Matrix& stddevs() const { return params_.stddevs; }
  const GmmParams& params() const { return params_; }

 private:
  GmmParams params_;
};

// T local descriptors of dimension d, one per row.
class LocalDescriptorSet {
 public:
  explicit LocalDescriptorSet(Matrix data);

  std::size_t count() const { return static_cast<std::size_t>(data_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(data_.cols()); }
  const Matrix& data() const { return data_; }

 private:
  Matrix data_;
};

struct FisherVector {
  Vector raw;
  Vector normalized;
  double norm = 0.0;
};

}  // namespace siamfv
