#include "siamfv/gmm_em.hpp"

#include "siamfv/error.hpp"
#include "siamfv/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace siamfv {
namespace {

// Responsibility mass below which a cluster counts as collapsed.
constexpr double kCollapsedMass = 1e-10;

Matrix sorted_rows(const Matrix& x) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(x.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index k = 0; k < x.cols(); ++k) {
      if (x(a, k) != x(b, k)) return x(a, k) < x(b, k);
    }
    return false;
  });
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < order.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(order[i]);
  return out;
}

double sum_in_order(const Vector& v) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += v[i];
  return s;
}

Vector global_stddev(const Matrix& x, double variance_floor) {
  const Vector mean = x.colwise().mean().transpose();
  Vector var = Vector::Zero(x.cols());
  for (Eigen::Index t = 0; t < x.rows(); ++t) var += (x.row(t).transpose() - mean).array().square().matrix();
  var /= static_cast<double>(x.rows());
  return var.cwiseMax(variance_floor).cwiseSqrt();
}

// Squared distance from every row to its nearest listed center.
Vector nearest_sq(const Matrix& x, const Matrix& centers, const std::vector<Eigen::Index>& live) {
  Vector out = Vector::Constant(x.rows(), INFINITY);
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    for (Eigen::Index j : live) out[t] = std::min(out[t], (x.row(t) - centers.row(j)).squaredNorm());
  }
  return out;
}

Matrix kmeanspp(const Matrix& x, std::size_t clusters, std::mt19937_64& rng) {
  const auto c = static_cast<Eigen::Index>(clusters);
  Matrix centers(c, x.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, x.rows() - 1);
  centers.row(0) = x.row(pick(rng));
  Vector dist = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index j = 1; j < c; ++j) {
    const double total = sum_in_order(dist);
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double acc = 0.0;
      chosen = x.rows() - 1;
      for (Eigen::Index t = 0; t < x.rows(); ++t) {
        acc += dist[t];
        if (acc > target && dist[t] > 0.0) {
          chosen = t;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    centers.row(j) = x.row(chosen);
    dist = dist.cwiseMin((x.rowwise() - centers.row(j)).rowwise().squaredNorm());
  }
  return centers;
}

}  // namespace

double log_likelihood(const Matrix& descriptors, const GmmModel& gmm) {
  if (static_cast<std::size_t>(descriptors.cols()) != gmm.dim()) {
    throw std::invalid_argument("log_likelihood: dimension mismatch");
  }
  return sum_in_order(kernels::em_estep(descriptors, gmm.params()).log_density);
}

EmResult em_fit_traced(const Matrix& descriptors, const EmConfig& cfg) {
  if (cfg.num_clusters < 1) throw std::invalid_argument("em_fit: num_clusters must be positive");
  if (cfg.max_iters < 1) throw std::invalid_argument("em_fit: max_iters must be positive");
  if (!(cfg.tol > 0.0)) throw std::invalid_argument("em_fit: tol must be positive");
  if (!(cfg.variance_floor >= kStddevFloor * kStddevFloor)) {
    throw std::invalid_argument("em_fit: variance floor below the model stddev floor");
  }
  if (descriptors.cols() < 1) throw std::invalid_argument("em_fit: zero-dimensional descriptors");
  if (!descriptors.allFinite()) throw std::invalid_argument("em_fit: non-finite descriptor");
  if (static_cast<std::size_t>(descriptors.rows()) < cfg.num_clusters) throw Error("insufficient data");

  const Matrix x = sorted_rows(descriptors);
  const auto c = static_cast<Eigen::Index>(cfg.num_clusters);
  const auto d = x.cols();
  const auto count = x.rows();
  const Vector spread = global_stddev(x, cfg.variance_floor);
  std::mt19937_64 rng(cfg.seed);

  GmmParams p;
  p.weights = Vector::Constant(c, 1.0 / static_cast<double>(c));
  p.means = kmeanspp(x, cfg.num_clusters, rng);
  p.stddevs = spread.transpose().replicate(c, 1);

  std::vector<double> trace;
  std::vector<bool> reseeded;
  bool converged = false;
  std::size_t iter = 0;
  for (; iter < cfg.max_iters; ++iter) {
    kernels::EStep e = kernels::em_estep(x, p);
    const double ll = sum_in_order(e.log_density);
    if (!trace.empty() && std::abs(ll - trace.back()) < cfg.tol * std::abs(trace.back())) {
      trace.push_back(ll);
      reseeded.push_back(false);
      converged = true;
      break;
    }
    trace.push_back(ll);

    // M-step, reductions in row order.
    const Matrix& r = e.responsibilities;
    Vector mass = Vector::Zero(c);
    Matrix weighted = Matrix::Zero(c, d);
    for (Eigen::Index t = 0; t < count; ++t) {
      for (Eigen::Index j = 0; j < c; ++j) {
        mass[j] += r(t, j);
        weighted.row(j) += r(t, j) * x.row(t);
      }
    }
    std::vector<Eigen::Index> live, dead;
    for (Eigen::Index j = 0; j < c; ++j) (mass[j] > kCollapsedMass ? live : dead).push_back(j);
    for (Eigen::Index j : live) p.means.row(j) = weighted.row(j) / mass[j];
    Matrix var = Matrix::Zero(c, d);
    for (Eigen::Index t = 0; t < count; ++t) {
      for (Eigen::Index j : live) var.row(j) += r(t, j) * (x.row(t) - p.means.row(j)).array().square().matrix();
    }
    for (Eigen::Index j : live) {
      p.stddevs.row(j) = (var.row(j) / mass[j]).cwiseMax(cfg.variance_floor).cwiseSqrt();
      p.weights[j] = mass[j] / static_cast<double>(count);
    }
    // A collapsed cluster restarts on the descriptor farthest from the
    // surviving means, with the global spread and a token weight.
    for (Eigen::Index j : dead) {
      const Vector far = nearest_sq(x, p.means, live);
      Eigen::Index idx = 0;
      far.maxCoeff(&idx);
      p.means.row(j) = x.row(idx);
      p.stddevs.row(j) = spread.transpose();
      p.weights[j] = 1.0 / static_cast<double>(count);
      live.push_back(j);
    }
    p.weights /= sum_in_order(p.weights);
    reseeded.push_back(!dead.empty());
  }
  if (!converged) {
    trace.push_back(sum_in_order(kernels::em_estep(x, p).log_density));
    reseeded.push_back(false);
  }
  return EmResult{GmmModel(std::move(p)), std::move(trace), std::move(reseeded), iter, converged};
}

GmmModel em_fit(const Matrix& descriptors, const EmConfig& cfg) { return em_fit_traced(descriptors, cfg).model; }

}  // namespace siamfv
