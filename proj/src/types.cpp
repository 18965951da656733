#include "siamfv/types.hpp"

#include "siamfv/error.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace siamfv {

GmmModel::GmmModel(GmmParams params) : params_(std::move(params)) {
  const auto c = params_.weights.size();
  if (c < 1 || params_.means.cols() < 1) {
    throw std::invalid_argument("GmmModel: need at least one component and one dimension");
  }
  if (params_.means.rows() != c || params_.stddevs.rows() != c ||
      params_.stddevs.cols() != params_.means.cols()) {
    throw std::invalid_argument("GmmModel: inconsistent parameter shapes");
  }
  double sum = 0.0;
  for (Eigen::Index j = 0; j < c; ++j) {
    const double w = params_.weights[j];
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw std::invalid_argument("GmmModel: weights must be positive");
    }
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw std::invalid_argument("GmmModel: weights must sum to 1 (got " + std::to_string(sum) + ")");
  }
  if (!params_.means.allFinite()) {
    throw std::invalid_argument("GmmModel: non-finite mean");
  }
  for (Eigen::Index i = 0; i < params_.stddevs.size(); ++i) {
    const double s = params_.stddevs.data()[i];
    if (!(s >= kStddevFloor) || !std::isfinite(s)) {
      throw std::invalid_argument("GmmModel: stddev below floor");
    }
  }
}

LocalDescriptorSet::LocalDescriptorSet(Matrix data) : data_(std::move(data)) {
  if (data_.rows() < 1) {
    throw Error("empty input");
  }
  if (data_.cols() < 1) {
    throw std::invalid_argument("LocalDescriptorSet: zero-dimensional descriptors");
  }
  if (!data_.allFinite()) {
    throw std::invalid_argument("LocalDescriptorSet: non-finite descriptor value");
  }
}

}  // namespace siamfv
