#include "helpers.hpp"

#include "siamfv/error.hpp"
#include "siamfv/retrieval.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>

using namespace siamfv;
using siamfv::test::random_matrix;

namespace {

Vector unit(Vector v) { return v / v.norm(); }

// Precision at every relevant hit, brute force over prefixes.
double oracle_ap(const std::vector<std::string>& ranked, const std::set<std::string>& relevant) {
  double sum = 0.0;
  for (std::size_t k = 1; k <= ranked.size(); ++k) {
    if (!relevant.count(ranked[k - 1])) continue;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < k; ++i) hits += relevant.count(ranked[i]);
    sum += static_cast<double>(hits) / static_cast<double>(k);
  }
  return sum / static_cast<double>(relevant.size());
}

GalleryIndex small_gallery() {
  std::vector<GalleryItem> items;
  const double angles[] = {0.0, 0.1, 0.25, 1.0, 1.2};
  const char* names[] = {"a", "b", "c", "d", "e"};
  for (int i = 0; i < 5; ++i) {
    Vector v(2);
    v << std::cos(angles[i]), std::sin(angles[i]);
    items.push_back({names[i], v, "t"});
  }
  std::vector<GalleryQuery> queries{{"a", {"b", "c"}, {}}, {"d", {"e"}, {"c"}}};
  return GalleryIndex(std::move(items), std::move(queries));
}

}  // namespace

TEST_SUITE("retrieval") {
  TEST_CASE("pooling examples") {
    Matrix x(2, 2);
    x << 3.0, 0.0, 0.0, 4.0;
    const Vector sum = baseline_pool(LocalDescriptorSet(x), PoolMode::kSum);
    CHECK(sum[0] == doctest::Approx(0.6));
    CHECK(sum[1] == doctest::Approx(0.8));
    Matrix y(2, 2);
    y << 1.0, -2.0, -1.0, -3.0;
    const Vector mac = baseline_pool(LocalDescriptorSet(y), PoolMode::kMax);
    CHECK(mac[0] == doctest::Approx(1.0 / std::sqrt(5.0)));
    CHECK(mac[1] == doctest::Approx(-2.0 / std::sqrt(5.0)));
    Matrix z(2, 2);
    z << 1.0, 2.0, -1.0, -2.0;
    CHECK_THROWS_WITH_AS(baseline_pool(LocalDescriptorSet(z), PoolMode::kSum), "degenerate pooled vector", Error);
  }

  TEST_CASE("ranking by distance with id ties") {
    const GalleryIndex g = small_gallery();
    Vector q(2);
    q << 1.0, 0.0;
    CHECK(rank(q, g) == std::vector<std::string>{"a", "b", "c", "d", "e"});
    std::vector<GalleryItem> twins{{"z", unit(Vector::Ones(3)), "t"}, {"m", unit(Vector::Ones(3)), "t"}};
    const GalleryIndex tg(twins, {});
    CHECK(rank(unit(Vector::Ones(3)), tg) == std::vector<std::string>{"m", "z"});
    CHECK_THROWS_AS(rank(Vector::Ones(3), g), std::invalid_argument);
  }

  TEST_CASE("ranking matches a brute-force sort") {
    std::mt19937_64 rng(81);
    std::vector<GalleryItem> items;
    for (int i = 0; i < 60; ++i) items.push_back({"g" + std::to_string(i), unit(random_matrix(5, 1, rng).col(0)), "t"});
    const GalleryIndex g(items, {});
    for (int rep = 0; rep < 20; ++rep) {
      const Vector q = unit(random_matrix(5, 1, rng).col(0));
      std::vector<std::pair<double, std::string>> all;
      for (const auto& it : items) all.emplace_back((it.vector - q).norm(), it.id);
      std::sort(all.begin(), all.end());
      std::vector<std::string> want;
      for (auto& p : all) want.push_back(p.second);
      CHECK(rank(q, g) == want);
    }
  }

  TEST_CASE("gallery validation") {
    Vector v = Vector::Zero(2);
    v[0] = 1.0;
    CHECK_THROWS_AS(GalleryIndex({{"a", v, "t"}, {"a", v, "t"}}, {}), std::invalid_argument);
    CHECK_THROWS_AS(GalleryIndex({{"a", 2.0 * v, "t"}}, {}), std::invalid_argument);
    CHECK_THROWS_AS(GalleryIndex({{"a", v, "t"}, {"b", Vector::Ones(3) / std::sqrt(3.0), "t"}}, {}),
                    std::invalid_argument);
    CHECK_THROWS_AS(GalleryIndex({{"a", v, "t"}}, {{"q", {"a"}, {}}}), std::invalid_argument);
    CHECK_THROWS_AS(small_gallery().item("nope"), std::out_of_range);
  }

  TEST_CASE("average precision examples") {
    const std::vector<std::string> ranked{"r1", "n1", "r2", "n2"};
    CHECK(average_precision(ranked, {"r1"}) == 1.0);
    CHECK(average_precision(std::vector<std::string>{"n1", "r1"}, {"r1"}) == 0.5);
    CHECK(average_precision(ranked, {"r1", "r2"}) == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0));
    // r3 is never retrieved
    CHECK(average_precision(ranked, {"r1", "r2", "r3"}) == doctest::Approx((1.0 + 2.0 / 3.0) / 3.0));
    CHECK(average_precision(ranked, {"r1", "r2"}, {"n1"}) == 1.0);
    CHECK_THROWS_WITH_AS(average_precision(ranked, {}), "undefined AP", Error);
  }

  TEST_CASE("average precision matches the prefix oracle") {
    std::mt19937_64 rng(82);
    for (int rep = 0; rep < 300; ++rep) {
      const std::size_t n = 1 + rng() % 40;
      std::vector<std::string> ranked;
      for (std::size_t i = 0; i < n; ++i) ranked.push_back("i" + std::to_string(i));
      std::shuffle(ranked.begin(), ranked.end(), rng);
      std::set<std::string> relevant;
      for (const auto& id : ranked) {
        if (rng() % 3 == 0) relevant.insert(id);
      }
      if (relevant.empty()) relevant.insert(ranked[rng() % n]);
      CHECK(std::abs(average_precision(ranked, relevant) - oracle_ap(ranked, relevant)) < 1e-12);
      const double ap = average_precision(ranked, relevant);
      CHECK(ap > 0.0);
      CHECK(ap <= 1.0);
    }
  }

  TEST_CASE("mean average precision") {
    const GalleryIndex g = small_gallery();
    std::vector<RankedQuery> q{{"a", {"b", "c", "d", "e"}}, {"d", {"c", "a", "e"}}};
    // second query: c ignored, a irrelevant, e at 2
    CHECK(mean_average_precision(q, g) == doctest::Approx((1.0 + 0.5) / 2.0));
    CHECK_THROWS_WITH_AS(mean_average_precision(std::vector<RankedQuery>{}, g), "mAP over zero queries", Error);
    std::vector<RankedQuery> bad{{"b", {"a"}}};
    CHECK_THROWS_AS(mean_average_precision(bad, g), std::invalid_argument);

    const EvalReport r = evaluate(g);
    REQUIRE(r.queries.size() == 2);
    CHECK(r.queries[0].average_precision == 1.0);
    CHECK(r.queries[1].average_precision == 1.0);
    CHECK(r.mean_average_precision == 1.0);
  }

  TEST_CASE("leave-one-out scoring skips singleton classes") {
    Matrix v(4, 2);
    v << 1, 0, 0.99, 0.141067, 0, 1, -1, 0;
    for (Eigen::Index i = 0; i < 4; ++i) v.row(i).normalize();
    const std::vector<int> labels{0, 0, 1, 2};
    const std::vector<std::string> ids{"a", "b", "c", "d"};
    CHECK(leave_one_out_map(v, labels, ids) == 1.0);
    const std::vector<int> singles{0, 1, 2, 3};
    CHECK_THROWS_WITH_AS(leave_one_out_map(v, singles, ids), "mAP over zero queries", Error);
  }
}
