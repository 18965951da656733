#include "helpers.hpp"

#include "siamfv/error.hpp"
#include "siamfv/projection.hpp"

#include <Eigen/Eigenvalues>
#include <doctest.h>

#include <algorithm>
#include <numeric>

using namespace siamfv;
using siamfv::test::random_matrix;

namespace {

Matrix covariance(const Matrix& x) {
  const Matrix c = x.rowwise() - x.colwise().mean();
  return c.transpose() * c / static_cast<double>(x.rows());
}

Matrix whitened(const Matrix& x, const ProjectionModel& m) {
  Matrix y = (x.rowwise() - m.mean.transpose()) * m.basis;
  return y.array().rowwise() * m.scales.transpose().array();
}

// Align signs with the model's convention before comparing directions.
Vector canonical(Vector v) {
  Eigen::Index arg = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
  }
  return v[arg] < 0 ? Vector(-v) : v;
}

}  // namespace

TEST_SUITE("projection") {
  TEST_CASE("diagonal covariance picks the leading axes") {
    std::mt19937_64 rng(71);
    Matrix x = random_matrix(4000, 4, rng);
    x.col(0) *= 2.0;
    x.col(2) *= 0.5;
    x.col(3) *= 0.25;
    const ProjectionModel m = fit_pca_whiten(x, 2);
    CHECK(std::abs(std::abs(m.basis(0, 0)) - 1.0) < 0.01);
    CHECK(std::abs(std::abs(m.basis(1, 1)) - 1.0) < 0.01);
    const Matrix cov = covariance(whitened(x, m));
    CHECK((cov - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((m.basis.transpose() * m.basis - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-8);
  }

  TEST_CASE("complete basis round-trips") {
    std::mt19937_64 rng(72);
    const Matrix x = random_matrix(50, 5, rng) * random_matrix(5, 5, rng);
    const ProjectionModel m = fit_pca_whiten(x, 5);
    const Matrix y = whitened(x, m);
    const Matrix back = (y.array().rowwise() / m.scales.transpose().array()).matrix() * m.basis.transpose();
    CHECK(((back.rowwise() + m.mean.transpose()) - x).cwiseAbs().maxCoeff() < 1e-10);
  }

  TEST_CASE("eigenpairs match a dense eigensolver") {
    std::mt19937_64 rng(73);
    const Matrix x = random_matrix(120, 3, rng) * random_matrix(3, 10, rng) + 0.05 * random_matrix(120, 10, rng);
    const ProjectionModel m = fit_pca_whiten(x, 4);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(covariance(x));
    for (Eigen::Index i = 0; i < 4; ++i) {
      const double lambda = eig.eigenvalues()[9 - i];
      CHECK(std::abs(1.0 / (m.scales[i] * m.scales[i]) - 1e-10 - lambda) < 1e-8 * std::max(lambda, 1.0));
      const Vector want = canonical(eig.eigenvectors().col(9 - i));
      CHECK((Vector(m.basis.col(i)) - want).cwiseAbs().maxCoeff() < 1e-8);
    }
  }

  TEST_CASE("top-m basis minimizes reconstruction error") {
    std::mt19937_64 rng(74);
    const Matrix x = random_matrix(80, 5, rng) * random_matrix(5, 5, rng);
    const Matrix c = x.rowwise() - x.colwise().mean();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(covariance(x));
    const ProjectionModel m = fit_pca_whiten(x, 2);
    auto err = [&](const Matrix& basis) {
      return (c - c * basis * basis.transpose()).squaredNorm();
    };
    const double best = err(m.basis);
    for (int a = 0; a < 5; ++a) {
      for (int b = a + 1; b < 5; ++b) {
        Matrix pick(5, 2);
        pick << eig.eigenvectors().col(a), eig.eigenvectors().col(b);
        CHECK(best <= err(pick) + 1e-9);
      }
    }
  }

  TEST_CASE("rank errors") {
    std::mt19937_64 rng(75);
    CHECK_THROWS_WITH_AS(fit_pca_whiten(random_matrix(3, 6, rng), 3), "insufficient rank", Error);
    const Matrix low = random_matrix(40, 2, rng) * random_matrix(2, 6, rng);
    CHECK_THROWS_WITH_AS(fit_pca_whiten(low, 3), "insufficient rank", Error);
    std::vector<int> labels(40);
    for (int i = 0; i < 40; ++i) labels[static_cast<std::size_t>(i)] = i % 3;
    CHECK_THROWS_WITH_AS(fit_lda_whiten(random_matrix(40, 6, rng), labels, 3), "LDA rank bound exceeded", Error);
  }

  TEST_CASE("two-class axis is the closed form") {
    std::mt19937_64 rng(76);
    Matrix x = random_matrix(400, 2, rng);
    x.col(1) *= 0.3;
    std::vector<int> labels(400);
    for (Eigen::Index i = 0; i < 400; ++i) {
      labels[static_cast<std::size_t>(i)] = i < 200 ? 7 : 3;
      if (i >= 200) x.row(i) += Eigen::RowVector2d(3.0, 1.0);
    }
    const ProjectionModel m = fit_lda_whiten(x, labels, 1, LdaOptions{0.0});
    Eigen::Vector2d mu0 = x.topRows(200).colwise().mean().transpose();
    Eigen::Vector2d mu1 = x.bottomRows(200).colwise().mean().transpose();
    Eigen::Matrix2d sw = Eigen::Matrix2d::Zero();
    for (Eigen::Index i = 0; i < 400; ++i) {
      const Eigen::Vector2d d = x.row(i).transpose() - (i < 200 ? mu0 : mu1);
      sw += d * d.transpose();
    }
    sw /= 400.0;
    const Vector axis = canonical(Vector(sw.inverse() * (mu1 - mu0)).normalized());
    CHECK((Vector(m.basis.col(0)) - axis).cwiseAbs().maxCoeff() < 1e-6);
    // whitened within-class variance is one
    const Vector a = m.basis.col(0);
    CHECK(std::abs(m.scales[0] * m.scales[0] * a.dot(sw * a) - 1.0) < 1e-9);
  }

  TEST_CASE("renaming classes gives an identical model") {
    std::mt19937_64 rng(77);
    const Matrix x = random_matrix(60, 5, rng);
    std::vector<int> a(60), b(60);
    for (int i = 0; i < 60; ++i) {
      a[static_cast<std::size_t>(i)] = i % 4;
      b[static_cast<std::size_t>(i)] = 100 - 7 * (i % 4);
    }
    const ProjectionModel ma = fit_lda_whiten(x, a, 3);
    const ProjectionModel mb = fit_lda_whiten(x, b, 3);
    CHECK(ma.basis == mb.basis);
    CHECK(ma.scales == mb.scales);
  }

  TEST_CASE("five classes match a full-space generalized eigensolve") {
    std::mt19937_64 rng(78);
    const std::size_t n = 200, d = 6;
    Matrix x = random_matrix(n, d, rng);
    std::vector<int> labels(n);
    const Matrix centres = random_matrix(5, d, rng, 2.0);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = static_cast<int>(i % 5);
      x.row(static_cast<Eigen::Index>(i)) += centres.row(labels[i]);
    }
    const ProjectionModel m = fit_lda_whiten(x, labels, 4, LdaOptions{0.0});
    const Vector mean = x.colwise().mean().transpose();
    Eigen::MatrixXd sw = Eigen::MatrixXd::Zero(d, d), sb = Eigen::MatrixXd::Zero(d, d);
    for (int c = 0; c < 5; ++c) {
      Vector mu = Vector::Zero(d);
      int count = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] == c) {
          mu += x.row(static_cast<Eigen::Index>(i)).transpose();
          ++count;
        }
      }
      mu /= count;
      for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != c) continue;
        const Vector dv = x.row(static_cast<Eigen::Index>(i)).transpose() - mu;
        sw += dv * dv.transpose();
      }
      sb += count * (mu - mean) * (mu - mean).transpose();
    }
    sw /= static_cast<double>(n);
    sb /= static_cast<double>(n);
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ge(sb, sw);
    for (Eigen::Index i = 0; i < 4; ++i) {
      const Vector v = ge.eigenvectors().col(static_cast<Eigen::Index>(d) - 1 - i);
      CHECK((Vector(m.basis.col(i)) - canonical(v.normalized())).cwiseAbs().maxCoeff() < 1e-8);
      CHECK(std::abs(m.scales[i] - v.norm()) < 1e-8 * v.norm());
    }
  }

  TEST_CASE("projection contract") {
    std::mt19937_64 rng(79);
    const Matrix x = random_matrix(30, 6, rng);
    const ProjectionModel m = fit_pca_whiten(x, 3);
    CHECK_THROWS_WITH_AS(project(m.mean, m), "degenerate projection", Error);
    const Matrix batch = project_batch(x, m);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      CHECK(batch.row(i).transpose() == project(x.row(i).transpose(), m));
      CHECK(std::abs(batch.row(i).norm() - 1.0) < 1e-12);
    }
    CHECK_THROWS_AS(project(Vector::Zero(5), m), std::invalid_argument);
  }

  TEST_CASE("white complete basis keeps the direction") {
    // Rows +-sqrt(D) e_i have identity covariance and zero mean.
    const Eigen::Index d = 4;
    Matrix x(2 * d, d);
    x.setZero();
    for (Eigen::Index i = 0; i < d; ++i) {
      x(2 * i, i) = 2.0;
      x(2 * i + 1, i) = -2.0;
    }
    const ProjectionModel m = fit_pca_whiten(x, 4);
    Vector in(4);
    in << 0.1, -0.7, 0.3, 0.2;
    in.normalize();
    const Vector out = project(in, m);
    Vector sorted_in = in.cwiseAbs(), sorted_out = out.cwiseAbs();
    std::sort(sorted_in.data(), sorted_in.data() + 4);
    std::sort(sorted_out.data(), sorted_out.data() + 4);
    CHECK((sorted_in - sorted_out).cwiseAbs().maxCoeff() < 1e-9);
  }

  TEST_CASE("dataset separation") {
    CHECK_NOTHROW(require_disjoint_datasets({"paris"}, {"oxford"}));
    CHECK_THROWS_AS(require_disjoint_datasets({"paris", "oxford"}, {"oxford"}), Error);
  }
}
