#include "siamfv/kernels.hpp"

#include "siamfv/error.hpp"
#include "siamfv/fisher.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace siamfv::kernels::reference {
namespace {

enum class Wrt { kMean, kStddev, kWeight, kInput };

// Numerators of the soft assignment for descriptor t, shifted by their max so
// ratios are unaffected.
Vector numerators(const Matrix& x, Eigen::Index t, const GmmParams& p, PosteriorMode mode) {
  const auto c = static_cast<Eigen::Index>(p.num_clusters());
  const auto d = static_cast<Eigen::Index>(p.dim());
  Vector q(c);
  for (Eigen::Index j = 0; j < c; ++j) {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) {
      const double e = (x(t, k) - p.means(j, k)) / p.stddevs(j, k);
      acc -= 0.5 * e * e;
    }
    if (mode == PosteriorMode::kStandard) {
      acc += std::log(p.weights[j]);
      for (Eigen::Index k = 0; k < d; ++k) acc -= std::log(p.stddevs(j, k));
    }
    q[j] = acc;
  }
  return (q.array() - q.maxCoeff()).exp();
}

// d n_i / d phi for numerator i, where phi is the (cluster jp, dim k)
// parameter of kind `wrt` (jp is ignored for inputs).
double numerator_partial(const Matrix& x, Eigen::Index t, const GmmParams& p, PosteriorMode mode,
                         double n_i, Eigen::Index i, Wrt wrt, Eigen::Index jp, Eigen::Index k) {
  const double diff = x(t, k) - p.means(i, k);
  const double s = p.stddevs(i, k);
  switch (wrt) {
    case Wrt::kMean:
      return i == jp ? n_i * diff / (s * s) : 0.0;
    case Wrt::kStddev: {
      if (i != jp) return 0.0;
      double v = n_i * diff * diff / (s * s * s);
      if (mode == PosteriorMode::kStandard) v -= n_i / s;
      return v;
    }
    case Wrt::kWeight:
      return (i == jp && mode == PosteriorMode::kStandard) ? n_i / p.weights[i] : 0.0;
    case Wrt::kInput:
      return -n_i * diff / (s * s);
  }
  return 0.0;
}

// Quotient rule on tau_tj = n_j / sum_i n_i.
double tau_partial(const Matrix& x, Eigen::Index t, Eigen::Index j, const GmmParams& p,
                   PosteriorMode mode, Wrt wrt, Eigen::Index jp, Eigen::Index k) {
  const Vector n = numerators(x, t, p, mode);
  const double total = n.sum();
  double d_total = 0.0;
  for (Eigen::Index i = 0; i < n.size(); ++i) {
    d_total += numerator_partial(x, t, p, mode, n[i], i, wrt, jp, k);
  }
  const double d_nj = numerator_partial(x, t, p, mode, n[j], j, wrt, jp, k);
  return (total * d_nj - n[j] * d_total) / (total * total);
}

double tau(const Matrix& x, Eigen::Index t, Eigen::Index j, const GmmParams& p, PosteriorMode mode) {
  const Vector n = numerators(x, t, p, mode);
  return n[j] / n.sum();
}

}  // namespace

Matrix encode_batch(std::span<const Matrix> sets, const GmmParams& params, PosteriorMode mode) {
  const auto c = static_cast<Eigen::Index>(params.num_clusters());
  const auto d = static_cast<Eigen::Index>(params.dim());
  Matrix out(static_cast<Eigen::Index>(sets.size()), c * d);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const Matrix& x = sets[i];
    detail::check_dims(x, params);
    if (x.rows() == 0) throw Error("empty input (item " + std::to_string(i) + ")");
    const auto count = static_cast<double>(x.rows());
    Vector zeta = Vector::Zero(c * d);
    for (Eigen::Index j = 0; j < c; ++j) {
      for (Eigen::Index k = 0; k < d; ++k) {
        double acc = 0.0;
        for (Eigen::Index t = 0; t < x.rows(); ++t) {
          acc += tau(x, t, j, params, mode) * (x(t, k) - params.means(j, k)) / params.stddevs(j, k);
        }
        zeta[j * d + k] = acc / (count * std::sqrt(params.weights[j]));
      }
    }
    const double norm = std::sqrt(zeta.dot(zeta));
    if (!(norm > 0.0)) throw Error("degenerate Fisher vector (item " + std::to_string(i) + ")");
    out.row(static_cast<Eigen::Index>(i)) = zeta.transpose() / norm;
  }
  return out;
}

ParamJacobian param_jacobian(const Matrix& x, const GmmParams& p, PosteriorMode mode,
                             const Matrix& /*tau*/) {
  const auto c = static_cast<Eigen::Index>(p.num_clusters());
  const auto d = static_cast<Eigen::Index>(p.dim());
  const auto count = x.rows();
  ParamJacobian jac{Matrix::Zero(c, c * d), Matrix::Zero(c * d, c * d), Matrix::Zero(c * d, c * d)};
  for (Eigen::Index j = 0; j < c; ++j) {
    const double sw = std::sqrt(p.weights[j]);
    const double pre = 1.0 / (static_cast<double>(count) * sw);
    for (Eigen::Index k = 0; k < d; ++k) {
      const Eigen::Index out = j * d + k;
      const double s = p.stddevs(j, k);
      for (Eigen::Index t = 0; t < count; ++t) {
        const double diff = x(t, k) - p.means(j, k);
        const double tj = tau(x, t, j, p, mode);
        // d/dw_j of 1/sqrt(w_j), times the summand.
        jac.d_omega(j, out) += -0.5 / (static_cast<double>(count) * p.weights[j] * sw) * tj * diff / s;
        jac.d_mu(out, out) -= pre * tj / s;
        jac.d_sigma(out, out) -= pre * tj * diff / (s * s);
        for (Eigen::Index jp = 0; jp < c; ++jp) {
          if (mode == PosteriorMode::kStandard) {
            jac.d_omega(jp, out) += pre * tau_partial(x, t, j, p, mode, Wrt::kWeight, jp, 0) * diff / s;
          }
          for (Eigen::Index kp = 0; kp < d; ++kp) {
            const Eigen::Index in = jp * d + kp;
            jac.d_mu(in, out) += pre * tau_partial(x, t, j, p, mode, Wrt::kMean, jp, kp) * diff / s;
            jac.d_sigma(in, out) += pre * tau_partial(x, t, j, p, mode, Wrt::kStddev, jp, kp) * diff / s;
          }
        }
      }
    }
  }
  return jac;
}

Matrix input_jacobian(const Matrix& x, const GmmParams& p, PosteriorMode mode, const Matrix& /*tau*/) {
  const auto c = static_cast<Eigen::Index>(p.num_clusters());
  const auto d = static_cast<Eigen::Index>(p.dim());
  const auto count = x.rows();
  Matrix jac = Matrix::Zero(count * d, c * d);
  for (Eigen::Index j = 0; j < c; ++j) {
    const double pre = 1.0 / (static_cast<double>(count) * std::sqrt(p.weights[j]));
    for (Eigen::Index k = 0; k < d; ++k) {
      const double s = p.stddevs(j, k);
      for (Eigen::Index t = 0; t < count; ++t) {
        const double diff = x(t, k) - p.means(j, k);
        for (Eigen::Index kp = 0; kp < d; ++kp) {
          double v = tau_partial(x, t, j, p, mode, Wrt::kInput, 0, kp) * diff;
          if (kp == k) v += tau(x, t, j, p, mode);
          jac(t * d + kp, j * d + k) = pre * v / s;
        }
      }
    }
  }
  return jac;
}

Matrix squared_distances(const Matrix& queries, const Matrix& gallery) {
  if (queries.cols() != gallery.cols()) {
    throw std::invalid_argument("squared_distances: dimension mismatch");
  }
  Matrix out(queries.rows(), gallery.rows());
  for (Eigen::Index q = 0; q < queries.rows(); ++q) {
    for (Eigen::Index g = 0; g < gallery.rows(); ++g) {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < queries.cols(); ++k) {
        const double diff = queries(q, k) - gallery(g, k);
        acc += diff * diff;
      }
      out(q, g) = acc;
    }
  }
  return out;
}

EStep em_estep(const Matrix& x, const GmmParams& p) {
  const auto c = static_cast<Eigen::Index>(p.num_clusters());
  const auto d = static_cast<Eigen::Index>(p.dim());
  EStep out{Matrix(x.rows(), c), Vector(x.rows())};
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    Vector log_joint(c);
    for (Eigen::Index j = 0; j < c; ++j) {
      double acc = std::log(p.weights[j]);
      for (Eigen::Index k = 0; k < d; ++k) {
        const double s = p.stddevs(j, k);
        const double diff = x(t, k) - p.means(j, k);
        acc += -0.5 * std::log(2.0 * std::numbers::pi * s * s) - diff * diff / (2.0 * s * s);
      }
      log_joint[j] = acc;
    }
    const double m = log_joint.maxCoeff();
    const double lse = m + std::log((log_joint.array() - m).exp().sum());
    out.log_density[t] = lse;
    out.responsibilities.row(t) = (log_joint.array() - lse).exp().transpose();
  }
  return out;
}

}  // namespace siamfv::kernels::reference
