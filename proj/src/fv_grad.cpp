#include "siamfv/fv_grad.hpp"

#include "siamfv/error.hpp"
#include "siamfv/fisher.hpp"
#include "siamfv/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace siamfv {

TauPartials tau_partials(const LocalDescriptorSet& descriptors, const GmmModel& gmm, std::size_t t,
                         std::size_t j, std::size_t k, PosteriorMode mode) {
  if (descriptors.dim() != gmm.dim()) {
    throw std::invalid_argument("tau_partials: descriptor dimension does not match the GMM");
  }
  if (t >= descriptors.count() || j >= gmm.num_clusters() || k >= gmm.dim()) {
    throw std::out_of_range("tau_partials: index out of range");
  }
  const auto ti = static_cast<Eigen::Index>(t);
  const auto ji = static_cast<Eigen::Index>(j);
  const auto ki = static_cast<Eigen::Index>(k);
  const Matrix& x = descriptors.data();
  const GmmParams& p = gmm.params();

  Vector tau(static_cast<Eigen::Index>(gmm.num_clusters()));
  detail::posterior_row(x.row(ti).transpose(), p, mode, tau);

  // dq_i/dx_tk for every cluster i; its tau-weighted mean enters the x partial.
  double mean_dq_dx = 0.0;
  for (Eigen::Index i = 0; i < tau.size(); ++i) {
    const double s = p.stddevs(i, ki);
    mean_dq_dx += tau[i] * (-(x(ti, ki) - p.means(i, ki)) / (s * s));
  }
  const double s = p.stddevs(ji, ki);
  const double diff = x(ti, ki) - p.means(ji, ki);
  const double tj = tau[ji];

  TauPartials out;
  out.d_mu = tj * (1.0 - tj) * diff / (s * s);
  double dq_dsigma = diff * diff / (s * s * s);
  if (mode == PosteriorMode::kStandard) dq_dsigma -= 1.0 / s;
  out.d_sigma = tj * (1.0 - tj) * dq_dsigma;
  out.d_x = tj * (-diff / (s * s) - mean_dq_dx);
  return out;
}

GmmGrads GmmGrads::zeros(std::size_t clusters, std::size_t dim) {
  const auto c = static_cast<Eigen::Index>(clusters);
  const auto d = static_cast<Eigen::Index>(dim);
  return GmmGrads{Vector::Zero(c), Matrix::Zero(c, d), Matrix::Zero(c, d)};
}

GmmGrads& GmmGrads::operator+=(const GmmGrads& other) {
  weights += other.weights;
  means += other.means;
  stddevs += other.stddevs;
  return *this;
}

bool GmmGrads::all_finite() const {
  return weights.allFinite() && means.allFinite() && stddevs.allFinite();
}

namespace detail {

FvGradients fv_grads(const Matrix& x, const GmmParams& p, PosteriorMode mode, bool params_block,
                     bool input_block) {
  if (x.rows() == 0) throw Error("empty input");
  check_dims(x, p);
  const Matrix tau = assignments(x, p, mode);
  FvGradients g;
  g.clusters = p.num_clusters();
  g.dim = p.dim();
  g.count = static_cast<std::size_t>(x.rows());
  if (params_block) {
    auto jac = kernels::param_jacobian(x, p, mode, tau);
    g.d_omega = std::move(jac.d_omega);
    g.d_mu = std::move(jac.d_mu);
    g.d_sigma = std::move(jac.d_sigma);
  }
  if (input_block) g.d_x = kernels::input_jacobian(x, p, mode, tau);
  return g;
}

FvForward fv_forward(const Matrix& x, const GmmParams& p, PosteriorMode mode) {
  if (x.rows() == 0) throw Error("empty input");
  check_dims(x, p);
  const auto c = static_cast<Eigen::Index>(p.num_clusters());
  const auto d = static_cast<Eigen::Index>(p.dim());
  FvForward f;
  f.tau = assignments(x, p, mode);
  f.raw = Vector::Zero(c * d);
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    for (Eigen::Index j = 0; j < c; ++j) {
      for (Eigen::Index k = 0; k < d; ++k) {
        f.raw[j * d + k] += f.tau(t, j) * (x(t, k) - p.means(j, k)) / p.stddevs(j, k);
      }
    }
  }
  for (Eigen::Index j = 0; j < c; ++j) {
    f.raw.segment(j * d, d) /= static_cast<double>(x.rows()) * std::sqrt(p.weights[j]);
  }
  f.norm = f.raw.norm();
  if (!(f.norm > 0.0) || !std::isfinite(f.norm)) throw Error("degenerate Fisher vector");
  f.normalized = f.raw / f.norm;
  return f;
}

FvBackward fv_backward(const Matrix& x, const GmmParams& p, PosteriorMode mode,
                       const FvForward& f, const Vector& upstream) {
  const auto c = static_cast<Eigen::Index>(p.num_clusters());
  const auto d = static_cast<Eigen::Index>(p.dim());
  const auto count = x.rows();
  if (upstream.size() != c * d) throw std::invalid_argument("fv_backward: upstream size mismatch");

  // Through the normalization, then fold in the 1/(T sqrt(w_j)) prefactor.
  const Vector r = (upstream - f.normalized * f.normalized.dot(upstream)) / f.norm;
  Matrix scaled(c, d);
  for (Eigen::Index j = 0; j < c; ++j) {
    scaled.row(j) = r.segment(j * d, d).transpose() / (static_cast<double>(count) * std::sqrt(p.weights[j]));
  }

  FvBackward b{GmmGrads::zeros(p.num_clusters(), p.dim()), Matrix::Zero(count, d)};
  for (Eigen::Index j = 0; j < c; ++j) {
    b.gmm.weights[j] = -r.segment(j * d, d).dot(f.raw.segment(j * d, d)) / (2.0 * p.weights[j]);
  }

  Matrix e(c, d);
  Vector s(c), u(c);
  for (Eigen::Index t = 0; t < count; ++t) {
    for (Eigen::Index j = 0; j < c; ++j) {
      for (Eigen::Index k = 0; k < d; ++k) e(j, k) = (x(t, k) - p.means(j, k)) / p.stddevs(j, k);
      s[j] = scaled.row(j).dot(e.row(j));
    }
    const double mean_s = f.tau.row(t).dot(s);
    for (Eigen::Index j = 0; j < c; ++j) u[j] = f.tau(t, j) * (s[j] - mean_s);

    for (Eigen::Index j = 0; j < c; ++j) {
      const double tj = f.tau(t, j);
      if (mode == PosteriorMode::kStandard) b.gmm.weights[j] += u[j] / p.weights[j];
      for (Eigen::Index k = 0; k < d; ++k) {
        const double inv_s = 1.0 / p.stddevs(j, k);
        const double ejk = e(j, k);
        const double direct = scaled(j, k) * tj * inv_s;
        b.gmm.means(j, k) += u[j] * ejk * inv_s - direct;
        double dq_dsigma = ejk * ejk;
        if (mode == PosteriorMode::kStandard) dq_dsigma -= 1.0;
        b.gmm.stddevs(j, k) += u[j] * dq_dsigma * inv_s - direct * ejk;
        b.x(t, k) += -u[j] * ejk * inv_s + direct;
      }
    }
  }
  return b;
}

}  // namespace detail

FvGradients fv_param_grads(const LocalDescriptorSet& descriptors, const GmmModel& gmm, PosteriorMode mode) {
  return detail::fv_grads(descriptors.data(), gmm.params(), mode, true, false);
}

FvGradients fv_input_grads(const LocalDescriptorSet& descriptors, const GmmModel& gmm, PosteriorMode mode) {
  return detail::fv_grads(descriptors.data(), gmm.params(), mode, false, true);
}

FvGradients fv_grads(const LocalDescriptorSet& descriptors, const GmmModel& gmm, PosteriorMode mode) {
  return detail::fv_grads(descriptors.data(), gmm.params(), mode, true, true);
}

FvGradients normalized_chain(const Vector& raw, const FvGradients& raw_grads) {
  const double norm = raw.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) throw Error("degenerate Fisher vector");
  const Vector unit = raw / norm;
  auto chain = [&](const Matrix& j) -> Matrix {
    if (j.size() == 0) return j;
    if (j.cols() != raw.size()) throw std::invalid_argument("normalized_chain: shape mismatch");
    const Vector radial = j * unit;
    return (j - radial * unit.transpose()) / norm;
  };
  FvGradients out = raw_grads;
  out.d_omega = chain(raw_grads.d_omega);
  out.d_mu = chain(raw_grads.d_mu);
  out.d_sigma = chain(raw_grads.d_sigma);
  out.d_x = chain(raw_grads.d_x);
  return out;
}

}  // namespace siamfv
