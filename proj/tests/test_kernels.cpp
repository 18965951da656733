#include "helpers.hpp"

#include "siamfv/error.hpp"
#include "siamfv/kernels.hpp"

#include <doctest.h>

#include <string>

using namespace siamfv;
using siamfv::test::random_gmm;
using siamfv::test::random_matrix;

TEST_SUITE("kernels") {
  TEST_CASE("batch encoding agrees with the reference") {
    std::mt19937_64 rng(31);
    const GmmModel g = random_gmm(5, 6, rng);
    std::vector<Matrix> sets;
    for (int i = 0; i < 9; ++i) sets.push_back(random_matrix(3 + i, 6, rng));
    for (PosteriorMode mode : {PosteriorMode::kUnweighted, PosteriorMode::kStandard}) {
      const Matrix a = kernels::encode_batch(sets, g.params(), mode);
      const Matrix b = kernels::reference::encode_batch(sets, g.params(), mode);
      CHECK((a - b).cwiseAbs().maxCoeff() < 1e-14);
      for (Eigen::Index i = 0; i < a.rows(); ++i) CHECK(std::abs(a.row(i).norm() - 1.0) < 1e-12);
    }
  }

  TEST_CASE("batch encoding names the degenerate item") {
    std::mt19937_64 rng(32);
    const GmmModel g = random_gmm(1, 2, rng);
    std::vector<Matrix> sets{random_matrix(2, 2, rng), g.means()};
    try {
      (void)kernels::encode_batch(sets, g.params(), PosteriorMode::kUnweighted);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("item 1") != std::string::npos);
    }
  }

  TEST_CASE("squared distances agree with the reference") {
    std::mt19937_64 rng(33);
    const Matrix q = random_matrix(7, 10, rng);
    const Matrix gal = random_matrix(13, 10, rng);
    const Matrix a = kernels::squared_distances(q, gal);
    const Matrix b = kernels::reference::squared_distances(q, gal);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs(a(2, 5) - (q.row(2) - gal.row(5)).squaredNorm()) < 1e-12);
  }

  TEST_CASE("E-step agrees with the reference") {
    std::mt19937_64 rng(34);
    const GmmModel g = random_gmm(4, 3, rng);
    const Matrix x = random_matrix(50, 3, rng);
    const auto a = kernels::em_estep(x, g.params());
    const auto b = kernels::reference::em_estep(x, g.params());
    CHECK((a.responsibilities - b.responsibilities).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((a.log_density - b.log_density).cwiseAbs().maxCoeff() < 1e-12);
  }
}
