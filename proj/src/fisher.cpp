#include "siamfv/fisher.hpp"

#include "siamfv/error.hpp"

#include <cmath>
#include <stdexcept>

namespace siamfv {
namespace detail {

void check_dims(const Matrix& descriptors, const GmmParams& params) {
  if (static_cast<std::size_t>(descriptors.cols()) != params.dim()) {
    throw std::invalid_argument("descriptor dimension does not match the GMM");
  }
}

void posterior_row(const Eigen::Ref<const Vector>& x, const GmmParams& params,
                   PosteriorMode mode, Eigen::Ref<Vector> out) {
  const auto c = static_cast<Eigen::Index>(params.num_clusters());
  const auto d = static_cast<Eigen::Index>(params.dim());
  double max_q = -INFINITY;
  for (Eigen::Index j = 0; j < c; ++j) {
    double q = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) {
      const double e = (x[k] - params.means(j, k)) / params.stddevs(j, k);
      q -= 0.5 * e * e;
    }
    if (mode == PosteriorMode::kStandard) {
      q += std::log(params.weights[j]);
      for (Eigen::Index k = 0; k < d; ++k) q -= std::log(params.stddevs(j, k));
    }
    out[j] = q;
    if (q > max_q) max_q = q;
  }
  double sum = 0.0;
  for (Eigen::Index j = 0; j < c; ++j) {
    out[j] = std::exp(out[j] - max_q);
    sum += out[j];
  }
  out /= sum;
}

Matrix assignments(const Matrix& descriptors, const GmmParams& params, PosteriorMode mode) {
  check_dims(descriptors, params);
  Matrix tau(descriptors.rows(), static_cast<Eigen::Index>(params.num_clusters()));
  Vector row(tau.cols());
  for (Eigen::Index t = 0; t < descriptors.rows(); ++t) {
    posterior_row(descriptors.row(t).transpose(), params, mode, row);
    tau.row(t) = row.transpose();
  }
  return tau;
}

Vector fv_unnormalized(const Matrix& descriptors, const GmmParams& params, PosteriorMode mode) {
  if (descriptors.rows() == 0) throw Error("empty input");
  check_dims(descriptors, params);
  const auto c = static_cast<Eigen::Index>(params.num_clusters());
  const auto d = static_cast<Eigen::Index>(params.dim());
  const auto count = descriptors.rows();

  Vector zeta = Vector::Zero(c * d);
  Vector tau(c);
  for (Eigen::Index t = 0; t < count; ++t) {
    posterior_row(descriptors.row(t).transpose(), params, mode, tau);
    for (Eigen::Index j = 0; j < c; ++j) {
      for (Eigen::Index k = 0; k < d; ++k) {
        zeta[j * d + k] += tau[j] * (descriptors(t, k) - params.means(j, k)) / params.stddevs(j, k);
      }
    }
  }
  for (Eigen::Index j = 0; j < c; ++j) {
    zeta.segment(j * d, d) /= static_cast<double>(count) * std::sqrt(params.weights[j]);
  }
  return zeta;
}

}  // namespace detail

Vector posterior(const Eigen::Ref<const Vector>& x, const GmmModel& gmm, PosteriorMode mode) {
  if (static_cast<std::size_t>(x.size()) != gmm.dim()) {
    throw std::invalid_argument("posterior: descriptor dimension does not match the GMM");
  }
  Vector out(static_cast<Eigen::Index>(gmm.num_clusters()));
  detail::posterior_row(x, gmm.params(), mode, out);
  return out;
}

Matrix assignments(const LocalDescriptorSet& descriptors, const GmmModel& gmm, PosteriorMode mode) {
  return detail::assignments(descriptors.data(), gmm.params(), mode);
}

Vector fv_unnormalized(const LocalDescriptorSet& descriptors, const GmmModel& gmm, PosteriorMode mode) {
  return detail::fv_unnormalized(descriptors.data(), gmm.params(), mode);
}

FisherVector fv_normalize(Vector raw) {
  const double norm = raw.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) throw Error("degenerate Fisher vector");
  FisherVector fv;
  fv.normalized = raw / norm;
  fv.raw = std::move(raw);
  fv.norm = norm;
  return fv;
}

FisherVector fv_encode(const LocalDescriptorSet& descriptors, const GmmModel& gmm, PosteriorMode mode) {
  return fv_normalize(fv_unnormalized(descriptors, gmm, mode));
}

}  // namespace siamfv
