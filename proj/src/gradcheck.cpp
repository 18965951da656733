#include "siamfv/gradcheck.hpp"

#include "siamfv/fisher.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <type_traits>
#include <vector>

namespace siamfv {
namespace {

constexpr double kDenominatorFloor = 1e-12;

Matrix descriptors_of(const Matrix& patches, const BackboneModel& backbone) {
  Matrix x = patches * backbone.weights;
  x.rowwise() += backbone.bias.transpose();
  return x;
}

Vector normalized_fv(const Matrix& x, const GmmParams& p, PosteriorMode mode) {
  const Vector raw = detail::fv_unnormalized(x, p, mode);
  return raw / raw.norm();
}

using Real = long double;

// Naive extended-precision restatement of the forward model, kept apart from
// the production encoder so the difference quotients do not share its code.
struct Oracle {
  std::size_t c, d;
  PosteriorMode mode;
  std::vector<Real> w, mu, sigma;  // C, C*d, C*d

  std::vector<Real> raw(const std::vector<Real>& x, std::size_t t) const {
    std::vector<Real> fv(c * d, 0.0L), q(c), tau(c);
    for (std::size_t r = 0; r < t; ++r) {
      Real top = -INFINITY;
      for (std::size_t j = 0; j < c; ++j) {
        Real acc = 0.0L;
        for (std::size_t k = 0; k < d; ++k) {
          const Real e = (x[r * d + k] - mu[j * d + k]) / sigma[j * d + k];
          acc -= 0.5L * e * e;
          if (mode == PosteriorMode::kStandard) acc -= std::log(sigma[j * d + k]);
        }
        if (mode == PosteriorMode::kStandard) acc += std::log(w[j]);
        q[j] = acc;
        top = std::max(top, acc);
      }
      Real total = 0.0L;
      for (std::size_t j = 0; j < c; ++j) total += tau[j] = std::exp(q[j] - top);
      for (std::size_t j = 0; j < c; ++j) {
        for (std::size_t k = 0; k < d; ++k) {
          fv[j * d + k] += tau[j] / total * (x[r * d + k] - mu[j * d + k]) / sigma[j * d + k];
        }
      }
    }
    for (std::size_t j = 0; j < c; ++j) {
      const Real scale = 1.0L / (static_cast<Real>(t) * std::sqrt(w[j]));
      for (std::size_t k = 0; k < d; ++k) fv[j * d + k] *= scale;
    }
    return fv;
  }

  static std::vector<Real> normalized(std::vector<Real> v) {
    Real sq = 0.0L;
    for (Real a : v) sq += a * a;
    const Real norm = std::sqrt(sq);
    for (Real& a : v) a /= norm;
    return v;
  }

  Real loss(const std::vector<Real>& xl, std::size_t tl, const std::vector<Real>& xr, std::size_t tr,
            PairLabel label, Real margin) const {
    const auto zl = normalized(raw(xl, tl));
    const auto zr = normalized(raw(xr, tr));
    Real sq = 0.0L;
    for (std::size_t i = 0; i < zl.size(); ++i) sq += (zl[i] - zr[i]) * (zl[i] - zr[i]);
    if (label == PairLabel::kMatching) return 0.5L * sq;
    const Real gap = std::max(0.0L, margin - std::sqrt(sq));
    return 0.5L * gap * gap;
  }
};

std::vector<Real> widen(const Matrix& m) {
  std::vector<Real> out(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i) out[static_cast<std::size_t>(i)] = m.data()[i];
  return out;
}

std::vector<Real> widen(const Vector& v) {
  std::vector<Real> out(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = v[i];
  return out;
}

std::vector<Real> affine(const std::vector<Real>& patches, std::size_t t, std::size_t raw_dim,
                         const std::vector<Real>& weights, const std::vector<Real>& bias) {
  const std::size_t d = bias.size();
  std::vector<Real> x(t * d);
  for (std::size_t r = 0; r < t; ++r) {
    for (std::size_t k = 0; k < d; ++k) {
      Real acc = bias[k];
      for (std::size_t i = 0; i < raw_dim; ++i) acc += patches[r * raw_dim + i] * weights[i * d + k];
      x[r * d + k] = acc;
    }
  }
  return x;
}

Real step_for(Real value, double step) { return static_cast<Real>(step) * std::max(std::abs(value), 1.0L); }

// Central difference of f with respect to `value`, which f reads through a
// reference.
template <typename F>
auto central(Real& value, double step, F&& f) {
  const Real saved = value;
  const Real h = step_for(saved, step);
  value = saved + h;
  auto f_plus = f();
  value = saved - h;
  auto f_minus = f();
  value = saved;
  if constexpr (std::is_same_v<decltype(f_plus), Real>) {
    return static_cast<double>((f_plus - f_minus) / (2.0L * h));
  } else {
    Vector out(static_cast<Eigen::Index>(f_plus.size()));
    for (std::size_t i = 0; i < f_plus.size(); ++i) {
      out[static_cast<Eigen::Index>(i)] = static_cast<double>((f_plus[i] - f_minus[i]) / (2.0L * h));
    }
    return out;
  }
}

double relative_error(double diff_norm, double a_norm, double n_norm) {
  const double err = diff_norm / std::max({a_norm, n_norm, kDenominatorFloor});
  return std::isnan(err) ? INFINITY : err;
}

struct FamilyTracker {
  GradCheckReport& report;

  void record(const std::string& family, const std::string& param, double err) {
    ++report.compared;
    auto [it, inserted] = report.per_family_errors.emplace(family, err);
    if (!inserted) it->second = std::max(it->second, err);
    if (err > report.max_rel_error || report.worst_parameter.empty()) {
      report.max_rel_error = err;
      report.worst_parameter = param;
    }
  }

  template <typename A, typename N>
  void elementwise(const A& a, const N& n) {
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      const double x = a.data()[i], y = n.data()[i];
      const double err = relative_error(std::abs(x - y), std::abs(x), std::abs(y));
      report.max_elementwise_rel_error = std::max(report.max_elementwise_rel_error, err);
    }
  }

  // Vector-valued map: one derivative vector per parameter (matrix row).
  void jacobian(const std::string& family, const std::string& prefix, const Matrix& a, const Matrix& n,
                std::size_t dim, bool per_cluster_rows) {
    if (a.rows() != n.rows() || a.cols() != n.cols()) {
      throw std::invalid_argument("compare_gradients: shape mismatch in " + family);
    }
    elementwise(a, n);
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      std::string name = prefix + "[";
      if (per_cluster_rows) {
        name += std::to_string(r);
      } else {
        name += std::to_string(r / static_cast<Eigen::Index>(dim)) + "," +
                std::to_string(r % static_cast<Eigen::Index>(dim));
      }
      name += "]";
      record(family, name, relative_error((a.row(r) - n.row(r)).norm(), a.row(r).norm(), n.row(r).norm()));
    }
  }

  // Scalar objective: the gradient over one parameter block is the vector.
  template <typename M>
  void gradient(const std::string& family, const std::string& block, const M& a, const M& n) {
    if (a.rows() != n.rows() || a.cols() != n.cols()) {
      throw std::invalid_argument("compare_gradients: shape mismatch in " + family);
    }
    elementwise(a, n);
    record(family, block, relative_error((a - n).norm(), a.norm(), n.norm()));
  }
};

}  // namespace

GradCheckInstance make_gradcheck_instance(std::size_t clusters, std::size_t dim, std::size_t count,
                                          std::uint64_t seed, PosteriorMode mode) {
  if (clusters < 1 || dim < 1 || count < 1) throw std::invalid_argument("gradcheck: sizes must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const auto c = static_cast<Eigen::Index>(clusters);
  const auto d = static_cast<Eigen::Index>(dim);
  const auto t = static_cast<Eigen::Index>(count);

  GradCheckInstance in;
  in.mode = mode;
  in.gmm.weights.resize(c);
  for (Eigen::Index j = 0; j < c; ++j) in.gmm.weights[j] = 0.5 + uniform(rng);
  in.gmm.weights /= in.gmm.weights.sum();
  in.gmm.means.resize(c, d);
  in.gmm.stddevs.resize(c, d);
  // Means and scales are drawn close together so every cluster keeps posterior
  // mass; a starved cluster has derivatives below the difference-quotient
  // resolution and says nothing about correctness.
  for (Eigen::Index i = 0; i < in.gmm.means.size(); ++i) in.gmm.means.data()[i] = 0.3 * normal(rng);
  for (Eigen::Index i = 0; i < in.gmm.stddevs.size(); ++i) in.gmm.stddevs.data()[i] = 0.8 + 0.4 * uniform(rng);

  in.backbone.weights = Matrix::Identity(d, d);
  for (Eigen::Index i = 0; i < in.backbone.weights.size(); ++i) {
    in.backbone.weights.data()[i] += 0.1 * normal(rng) / std::sqrt(static_cast<double>(d));
  }
  in.backbone.bias.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) in.backbone.bias[i] = 0.1 * normal(rng);

  in.patches_left.resize(t, d);
  in.patches_right.resize(t, d);
  for (Eigen::Index i = 0; i < in.patches_left.size(); ++i) in.patches_left.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < in.patches_right.size(); ++i) in.patches_right.data()[i] = normal(rng);

  in.label = uniform(rng) < 0.5 ? PairLabel::kMatching : PairLabel::kNonMatching;
  if (in.label == PairLabel::kNonMatching) {
    // Active hinge, well clear of the kink.
    const Matrix xl = descriptors_of(in.patches_left, in.backbone);
    const Matrix xr = descriptors_of(in.patches_right, in.backbone);
    const double dist = (normalized_fv(xl, in.gmm, mode) - normalized_fv(xr, in.gmm, mode)).norm();
    in.margin = dist + 0.25;
  }
  return in;
}

CheckedGradients analytic_gradients(const GradCheckInstance& in) {
  const Matrix xl = descriptors_of(in.patches_left, in.backbone);
  const Matrix xr = descriptors_of(in.patches_right, in.backbone);
  CheckedGradients out;
  out.raw = detail::fv_grads(xl, in.gmm, in.mode, true, true);
  const Vector raw_left = detail::fv_unnormalized(xl, in.gmm, in.mode);
  out.normalized = normalized_chain(raw_left, out.raw);

  const FvGradients right = normalized_chain(detail::fv_unnormalized(xr, in.gmm, in.mode),
                                             detail::fv_grads(xr, in.gmm, in.mode, true, true));
  const FisherVector zl = fv_normalize(raw_left);
  const FisherVector zr = fv_normalize(detail::fv_unnormalized(xr, in.gmm, in.mode));
  out.loss = loss_backward(zl, zr, in.label, in.margin, out.normalized, right);

  BackboneGrads bb = backbone_backward(in.patches_left, in.backbone, out.loss.x_left);
  const BackboneGrads bb_right = backbone_backward(in.patches_right, in.backbone, out.loss.x_right);
  bb.weights += bb_right.weights;
  bb.bias += bb_right.bias;
  out.backbone = std::move(bb);
  return out;
}

CheckedGradients numeric_gradients(const GradCheckInstance& in, double step) {
  if (!(step > 1e-9 && step < 1e-2)) throw std::invalid_argument("gradcheck: step must lie in (1e-9, 1e-2)");
  const std::size_t c = in.gmm.num_clusters();
  const std::size_t d = in.gmm.dim();
  const auto tl = static_cast<std::size_t>(in.patches_left.rows());
  const auto tr = static_cast<std::size_t>(in.patches_right.rows());
  const auto raw_dim = static_cast<std::size_t>(in.patches_left.cols());
  const auto n = static_cast<Eigen::Index>(c * d);

  Oracle o{c, d, in.mode, widen(in.gmm.weights), widen(in.gmm.means), widen(in.gmm.stddevs)};
  const std::vector<Real> pl = widen(in.patches_left), pr = widen(in.patches_right);
  std::vector<Real> weights = widen(in.backbone.weights), bias = widen(in.backbone.bias);
  std::vector<Real> xl = affine(pl, tl, raw_dim, weights, bias);
  std::vector<Real> xr = affine(pr, tr, raw_dim, weights, bias);
  const Real margin = in.margin;

  CheckedGradients out;
  for (FvGradients* g : {&out.raw, &out.normalized}) {
    g->clusters = c;
    g->dim = d;
    g->count = tl;
    g->d_omega.resize(static_cast<Eigen::Index>(c), n);
    g->d_mu.resize(n, n);
    g->d_sigma.resize(n, n);
    g->d_x.resize(static_cast<Eigen::Index>(tl * d), n);
  }
  out.loss.gmm = GmmGrads::zeros(c, d);
  out.loss.x_left.resize(static_cast<Eigen::Index>(tl), static_cast<Eigen::Index>(d));
  out.loss.x_right.resize(static_cast<Eigen::Index>(tr), static_cast<Eigen::Index>(d));

  // Each perturbation yields the raw and normalized rows together.
  auto both = [&]() {
    std::vector<Real> raw = o.raw(xl, tl);
    std::vector<Real> joined = raw;
    const std::vector<Real> unit = Oracle::normalized(std::move(raw));
    joined.insert(joined.end(), unit.begin(), unit.end());
    return joined;
  };
  auto store = [&](Matrix& raw_jac, Matrix& norm_jac, std::size_t row, const Vector& v) {
    raw_jac.row(static_cast<Eigen::Index>(row)) = v.head(n).transpose();
    norm_jac.row(static_cast<Eigen::Index>(row)) = v.tail(n).transpose();
  };
  auto loss = [&]() { return o.loss(xl, tl, xr, tr, in.label, margin); };

  for (std::size_t j = 0; j < c; ++j) {
    store(out.raw.d_omega, out.normalized.d_omega, j, central(o.w[j], step, both));
    out.loss.gmm.weights[static_cast<Eigen::Index>(j)] = central(o.w[j], step, loss);
    for (std::size_t k = 0; k < d; ++k) {
      const std::size_t i = j * d + k;
      store(out.raw.d_mu, out.normalized.d_mu, i, central(o.mu[i], step, both));
      store(out.raw.d_sigma, out.normalized.d_sigma, i, central(o.sigma[i], step, both));
      out.loss.gmm.means.data()[i] = central(o.mu[i], step, loss);
      out.loss.gmm.stddevs.data()[i] = central(o.sigma[i], step, loss);
    }
  }
  for (std::size_t i = 0; i < tl * d; ++i) {
    store(out.raw.d_x, out.normalized.d_x, i, central(xl[i], step, both));
    out.loss.x_left.data()[i] = central(xl[i], step, loss);
  }
  for (std::size_t i = 0; i < tr * d; ++i) out.loss.x_right.data()[i] = central(xr[i], step, loss);

  auto backbone_loss = [&]() {
    return o.loss(affine(pl, tl, raw_dim, weights, bias), tl, affine(pr, tr, raw_dim, weights, bias), tr, in.label,
                  margin);
  };
  out.backbone.weights.resize(in.backbone.weights.rows(), in.backbone.weights.cols());
  for (std::size_t i = 0; i < weights.size(); ++i) out.backbone.weights.data()[i] = central(weights[i], step, backbone_loss);
  out.backbone.bias.resize(in.backbone.bias.size());
  for (std::size_t i = 0; i < bias.size(); ++i) out.backbone.bias.data()[i] = central(bias[i], step, backbone_loss);
  return out;
}

GradCheckReport compare_gradients(const CheckedGradients& a, const CheckedGradients& n) {
  GradCheckReport report;
  FamilyTracker track{report};
  const std::size_t d = a.raw.dim;
  track.jacobian(kFamilyOmega, "omega", a.raw.d_omega, n.raw.d_omega, d, true);
  track.jacobian(kFamilyMu, "mu", a.raw.d_mu, n.raw.d_mu, d, false);
  track.jacobian(kFamilySigma, "sigma", a.raw.d_sigma, n.raw.d_sigma, d, false);
  track.jacobian(kFamilyX, "x", a.raw.d_x, n.raw.d_x, d, false);

  // With one cluster the weight is pinned to 1 and the normalized vector does
  // not depend on it; both sides are rounding noise there.
  const bool free_weights = a.raw.clusters > 1;
  if (free_weights) {
    track.jacobian(kFamilyNormalized, "normalized/omega", a.normalized.d_omega, n.normalized.d_omega, d, true);
  }
  track.jacobian(kFamilyNormalized, "normalized/mu", a.normalized.d_mu, n.normalized.d_mu, d, false);
  track.jacobian(kFamilyNormalized, "normalized/sigma", a.normalized.d_sigma, n.normalized.d_sigma, d, false);
  track.jacobian(kFamilyNormalized, "normalized/x", a.normalized.d_x, n.normalized.d_x, d, false);

  if (free_weights) track.gradient(kFamilyLoss, "loss/omega", a.loss.gmm.weights, n.loss.gmm.weights);
  track.gradient(kFamilyLoss, "loss/mu", a.loss.gmm.means, n.loss.gmm.means);
  track.gradient(kFamilyLoss, "loss/sigma", a.loss.gmm.stddevs, n.loss.gmm.stddevs);
  track.gradient(kFamilyLoss, "loss/x_left", a.loss.x_left, n.loss.x_left);
  track.gradient(kFamilyLoss, "loss/x_right", a.loss.x_right, n.loss.x_right);

  track.gradient(kFamilyBackbone, "backbone/W", a.backbone.weights, n.backbone.weights);
  track.gradient(kFamilyBackbone, "backbone/b", a.backbone.bias, n.backbone.bias);
  return report;
}

GradCheckReport finite_diff_check(const GradCheckInstance& instance, double step, const AnalyticSource& analytic) {
  const CheckedGradients numeric = numeric_gradients(instance, step);
  return compare_gradients(analytic(instance), numeric);
}

}  // namespace siamfv
