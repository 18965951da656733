#include "siamfv/projection.hpp"

#include "siamfv/error.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

namespace siamfv {
namespace {

// Flip the column so its largest-magnitude entry (first on ties) is positive.
void fix_sign(Eigen::Ref<Vector, 0, Eigen::InnerStride<>> v) {
  Eigen::Index arg = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
  }
  if (v[arg] < 0.0) v = -v;
}

void check_input(const Matrix& vectors, std::size_t m) {
  if (m < 1) throw std::invalid_argument("projection: output dimension must be positive");
  if (vectors.rows() < 1 || vectors.cols() < 1) throw Error("empty input");
  if (!vectors.allFinite()) throw std::invalid_argument("projection: non-finite input");
  if (m > static_cast<std::size_t>(vectors.cols())) {
    throw std::invalid_argument("projection: output dimension exceeds input dimension");
  }
}

// Thin SVD of the centered rows, rank decided against the usual tolerance.
struct Centered {
  Vector mean;
  Matrix data;
  Eigen::BDCSVD<Eigen::MatrixXd> svd;
  Eigen::Index rank = 0;
};

Centered center(const Matrix& vectors) {
  Centered c;
  c.mean = vectors.colwise().mean().transpose();
  c.data = vectors.rowwise() - c.mean.transpose();
  c.svd.compute(Eigen::MatrixXd(c.data), Eigen::ComputeThinV);
  const Vector& s = c.svd.singularValues();
  const double tol = s.size() > 0 ? s[0] * static_cast<double>(std::max(c.data.rows(), c.data.cols())) *
                                        std::numeric_limits<double>::epsilon()
                                  : 0.0;
  while (c.rank < s.size() && s[c.rank] > tol) ++c.rank;
  return c;
}

}  // namespace

ProjectionModel fit_pca_whiten(const Matrix& vectors, std::size_t m) {
  check_input(vectors, m);
  const auto mi = static_cast<Eigen::Index>(m);
  if (vectors.rows() <= mi) throw Error("insufficient rank");
  Centered c = center(vectors);
  if (c.rank < mi) throw Error("insufficient rank");

  ProjectionModel model;
  model.method = ProjectionMethod::kPca;
  model.mean = c.mean;
  model.basis = c.svd.matrixV().leftCols(mi);
  model.scales.resize(mi);
  const double n = static_cast<double>(vectors.rows());
  for (Eigen::Index i = 0; i < mi; ++i) {
    fix_sign(model.basis.col(i));
    const double s = c.svd.singularValues()[i];
    model.scales[i] = 1.0 / std::sqrt(s * s / n + kWhiteningEpsilon);
  }
  return model;
}

ProjectionModel fit_lda_whiten(const Matrix& vectors, std::span<const int> labels, std::size_t m,
                               const LdaOptions& options) {
  check_input(vectors, m);
  if (labels.size() != static_cast<std::size_t>(vectors.rows())) {
    throw std::invalid_argument("fit_lda_whiten: one label per row required");
  }
  if (!(options.ridge >= 0.0)) throw std::invalid_argument("fit_lda_whiten: ridge must be non-negative");

  std::map<int, Eigen::Index> slot;
  std::vector<std::vector<Eigen::Index>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = slot.emplace(labels[i], static_cast<Eigen::Index>(members.size()));
    if (inserted) members.emplace_back();
    members[static_cast<std::size_t>(it->second)].push_back(static_cast<Eigen::Index>(i));
  }
  if (m + 1 > members.size()) throw Error("LDA rank bound exceeded");

  // Both scatters vanish off the span of the centered data, so the problem is
  // solved in that span without loss.
  Centered c = center(vectors);
  if (c.rank < 1) throw Error("insufficient rank");
  const Eigen::MatrixXd span = c.svd.matrixV().leftCols(c.rank);
  const Eigen::MatrixXd z = c.data * span;  // N x r, coordinates in the span
  const Eigen::Index r = c.rank;
  const double n = static_cast<double>(vectors.rows());

  Eigen::MatrixXd within = Eigen::MatrixXd::Zero(r, r);
  Eigen::MatrixXd between = Eigen::MatrixXd::Zero(r, r);
  for (const auto& rows : members) {
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(r);
    for (Eigen::Index i : rows) mu += z.row(i).transpose();
    mu /= static_cast<double>(rows.size());
    for (Eigen::Index i : rows) {
      const Eigen::VectorXd dev = z.row(i).transpose() - mu;
      within.noalias() += dev * dev.transpose();
    }
    between.noalias() += static_cast<double>(rows.size()) * mu * mu.transpose();
  }
  within /= n;
  between /= n;
  within.diagonal().array() += options.ridge * within.trace() / static_cast<double>(r);

  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(between, within);
  if (solver.info() != Eigen::Success) throw Error("singular within-class scatter");
  const auto mi = static_cast<Eigen::Index>(m);
  if (mi > r) throw Error("insufficient rank");

  ProjectionModel model;
  model.method = ProjectionMethod::kLda;
  model.mean = c.mean;
  model.basis.resize(vectors.cols(), mi);
  model.scales.resize(mi);
  // Eigenvalues ascend; eigenvectors satisfy v^T S_w v = 1, so |v| is the
  // whitening scale of the unit direction v / |v|.
  for (Eigen::Index i = 0; i < mi; ++i) {
    const Eigen::VectorXd v = span * solver.eigenvectors().col(r - 1 - i);
    const double len = v.norm();
    model.basis.col(i) = v / len;
    fix_sign(model.basis.col(i));
    model.scales[i] = len;
  }
  return model;
}

Vector project(const Vector& x, const ProjectionModel& model) {
  if (static_cast<std::size_t>(x.size()) != model.input_dim()) {
    throw std::invalid_argument("project: input length does not match the model");
  }
  Vector y = model.scales.cwiseProduct(model.basis.transpose() * (x - model.mean));
  const double norm = y.norm();
  if (!(norm > 0.0)) throw Error("degenerate projection");
  return y / norm;
}

Matrix project_batch(const Matrix& rows, const ProjectionModel& model) {
  Matrix out(rows.rows(), static_cast<Eigen::Index>(model.output_dim()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) out.row(i) = project(rows.row(i).transpose(), model).transpose();
  return out;
}

void require_disjoint_datasets(const std::vector<std::string>& fit_tags, const std::vector<std::string>& eval_tags) {
  const std::set<std::string> fit(fit_tags.begin(), fit_tags.end());
  for (const auto& tag : eval_tags) {
    if (fit.contains(tag)) throw Error("projection fitted on evaluation dataset '" + tag + "'");
  }
}

}  // namespace siamfv
