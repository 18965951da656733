#include "siamfv/kernels.hpp"

#include "siamfv/error.hpp"
#include "siamfv/fisher.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace siamfv::kernels {
namespace {

// Per-cluster standardized residuals e_tjk = (x_tk - mu_jk) / sigma_jk and
// the log-numerator partials dq_tj/dmu_jk and dq_tj/dsigma_jk.
struct ClusterTerms {
  std::vector<Matrix> e;
  std::vector<Matrix> dq_dmu;
  std::vector<Matrix> dq_dsigma;
};

ClusterTerms cluster_terms(const Matrix& x, const GmmParams& p, PosteriorMode mode) {
  const auto c = static_cast<Eigen::Index>(p.num_clusters());
  ClusterTerms terms;
  terms.e.resize(c);
  terms.dq_dmu.resize(c);
  terms.dq_dsigma.resize(c);
  for (Eigen::Index j = 0; j < c; ++j) {
    const Eigen::RowVectorXd inv_sigma = p.stddevs.row(j).cwiseInverse();
    Matrix e = (x.rowwise() - p.means.row(j)).array().rowwise() * inv_sigma.array();
    terms.dq_dmu[j] = e.array().rowwise() * inv_sigma.array();
    Matrix sq = e.array().square();
    if (mode == PosteriorMode::kStandard) sq.array() -= 1.0;
    terms.dq_dsigma[j] = sq.array().rowwise() * inv_sigma.array();
    terms.e[j] = std::move(e);
  }
  return terms;
}

Vector prefactors(const GmmParams& p, Eigen::Index count) {
  return (p.weights.array().sqrt() * static_cast<double>(count)).inverse();
}

}  // namespace

Matrix encode_batch(std::span<const Matrix> sets, const GmmParams& params, PosteriorMode mode) {
  const auto n = static_cast<std::ptrdiff_t>(sets.size());
  const auto width = static_cast<Eigen::Index>(params.num_clusters() * params.dim());
  Matrix out(n, width);
  std::vector<char> bad(sets.size(), 0);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const Vector raw = detail::fv_unnormalized(sets[i], params, mode);
      const double norm = raw.norm();
      if (norm > 0.0 && std::isfinite(norm)) {
        out.row(i) = (raw / norm).transpose();
      } else {
        bad[i] = 1;
      }
    } catch (...) {
      bad[i] = 2;
    }
  }
  for (std::size_t i = 0; i < bad.size(); ++i) {
    if (bad[i] == 1) throw Error("degenerate Fisher vector (item " + std::to_string(i) + ")");
    if (bad[i] == 2) {
      detail::check_dims(sets[i], params);
      throw Error("empty input (item " + std::to_string(i) + ")");
    }
  }
  return out;
}

ParamJacobian param_jacobian(const Matrix& x, const GmmParams& p, PosteriorMode mode,
                             const Matrix& tau) {
  const auto c = static_cast<Eigen::Index>(p.num_clusters());
  const auto d = static_cast<Eigen::Index>(p.dim());
  const ClusterTerms terms = cluster_terms(x, p, mode);
  const Vector pre = prefactors(p, x.rows());

  // zeta_jk and the direct (non-tau) diagonal terms.
  Matrix zeta(c, d), direct_mu(c, d), direct_sigma(c, d);
  for (Eigen::Index j = 0; j < c; ++j) {
    zeta.row(j) = pre[j] * (tau.col(j).transpose() * terms.e[j]);
    direct_mu.row(j) = -pre[j] * tau.col(j).sum() * p.stddevs.row(j).cwiseInverse();
    direct_sigma.row(j) = -zeta.row(j).cwiseQuotient(p.stddevs.row(j));
  }

  ParamJacobian jac;
  jac.d_omega = Matrix::Zero(c, c * d);
  jac.d_mu.resize(c * d, c * d);
  jac.d_sigma.resize(c * d, c * d);

#pragma omp parallel for schedule(static)
  for (Eigen::Index jp = 0; jp < c; ++jp) {
    for (Eigen::Index j = 0; j < c; ++j) {
      // d tau_tj / d q_tj' = tau_tj (delta_jj' - tau_tj')
      Vector w = -tau.col(j).cwiseProduct(tau.col(jp));
      if (j == jp) w += tau.col(j);
      const Matrix weighted = w.asDiagonal() * terms.e[j];
      auto mu_block = jac.d_mu.block(jp * d, j * d, d, d);
      auto sigma_block = jac.d_sigma.block(jp * d, j * d, d, d);
      mu_block.noalias() = pre[j] * (terms.dq_dmu[jp].transpose() * weighted);
      sigma_block.noalias() = pre[j] * (terms.dq_dsigma[jp].transpose() * weighted);
      if (j == jp) {
        mu_block.diagonal() += direct_mu.row(j).transpose();
        sigma_block.diagonal() += direct_sigma.row(j).transpose();
        jac.d_omega.block(jp, j * d, 1, d) = -zeta.row(j) / (2.0 * p.weights[j]);
      }
      if (mode == PosteriorMode::kStandard) {
        jac.d_omega.block(jp, j * d, 1, d) +=
            (pre[j] / p.weights[jp]) * (w.transpose() * terms.e[j]);
      }
    }
  }
  return jac;
}

Matrix input_jacobian(const Matrix& x, const GmmParams& p, PosteriorMode mode, const Matrix& tau) {
  const auto c = static_cast<Eigen::Index>(p.num_clusters());
  const auto d = static_cast<Eigen::Index>(p.dim());
  const auto count = x.rows();
  const ClusterTerms terms = cluster_terms(x, p, mode);
  const Vector pre = prefactors(p, count);
  Matrix jac(count * d, c * d);

#pragma omp parallel for schedule(static)
  for (Eigen::Index t = 0; t < count; ++t) {
    // dq_tj/dx_tk' = -dq_tj/dmu_jk'; mean over clusters under tau.
    Eigen::RowVectorXd mean_dq = Eigen::RowVectorXd::Zero(d);
    for (Eigen::Index j = 0; j < c; ++j) mean_dq -= tau(t, j) * terms.dq_dmu[j].row(t);
    for (Eigen::Index j = 0; j < c; ++j) {
      const Eigen::RowVectorXd dtau = tau(t, j) * (-terms.dq_dmu[j].row(t) - mean_dq);
      auto block = jac.block(t * d, j * d, d, d);
      block.noalias() = pre[j] * (dtau.transpose() * terms.e[j].row(t));
      block.diagonal() += (pre[j] * tau(t, j)) * p.stddevs.row(j).cwiseInverse().transpose();
    }
  }
  return jac;
}

Matrix squared_distances(const Matrix& queries, const Matrix& gallery) {
  if (queries.cols() != gallery.cols()) {
    throw std::invalid_argument("squared_distances: dimension mismatch");
  }
  Matrix out(queries.rows(), gallery.rows());
#pragma omp parallel for schedule(static)
  for (Eigen::Index q = 0; q < queries.rows(); ++q) {
    for (Eigen::Index g = 0; g < gallery.rows(); ++g) {
      out(q, g) = (queries.row(q) - gallery.row(g)).squaredNorm();
    }
  }
  return out;
}

EStep em_estep(const Matrix& x, const GmmParams& p) {
  const auto c = static_cast<Eigen::Index>(p.num_clusters());
  const auto d = static_cast<Eigen::Index>(p.dim());
  const auto count = x.rows();
  Vector log_norm(c);
  Matrix inv_sigma = p.stddevs.cwiseInverse();
  for (Eigen::Index j = 0; j < c; ++j) {
    log_norm[j] = std::log(p.weights[j]) - 0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi) -
                  p.stddevs.row(j).array().log().sum();
  }
  EStep out{Matrix(count, c), Vector(count)};
#pragma omp parallel for schedule(static)
  for (Eigen::Index t = 0; t < count; ++t) {
    double max_l = -INFINITY;
    for (Eigen::Index j = 0; j < c; ++j) {
      double q = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) {
        const double e = (x(t, k) - p.means(j, k)) * inv_sigma(j, k);
        q += e * e;
      }
      const double l = log_norm[j] - 0.5 * q;
      out.responsibilities(t, j) = l;
      if (l > max_l) max_l = l;
    }
    double sum = 0.0;
    for (Eigen::Index j = 0; j < c; ++j) {
      const double r = std::exp(out.responsibilities(t, j) - max_l);
      out.responsibilities(t, j) = r;
      sum += r;
    }
    out.responsibilities.row(t) /= sum;
    out.log_density[t] = max_l + std::log(sum);
  }
  return out;
}

}  // namespace siamfv::kernels
