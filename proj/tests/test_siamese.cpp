#include "helpers.hpp"

#include "siamfv/error.hpp"
#include "siamfv/fisher.hpp"
#include "siamfv/gmm_em.hpp"
#include "siamfv/siamese.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>

using namespace siamfv;
using siamfv::test::random_gmm;
using siamfv::test::random_matrix;

namespace {

Vector unit(Vector v) { return v / v.norm(); }

ModelParams scalar_params() {
  ModelParams p;
  p.gmm.weights = Vector::Ones(1);
  p.gmm.means = Matrix::Zero(1, 1);
  p.gmm.stddevs = Matrix::Ones(1, 1);
  return p;
}

// Items from two classes whose descriptors differ in the first coordinate.
std::vector<TrainItem> two_class_items(std::size_t per_class, std::mt19937_64& rng) {
  std::vector<TrainItem> items;
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const int label = static_cast<int>(i % 2);
    Matrix x = random_matrix(12, 3, rng);
    x.col(0).array() += label == 0 ? -0.7 : 0.7;
    x.col(2).array() += 1.5 * std::normal_distribution<double>(0.0, 1.0)(rng);
    items.push_back({"item" + std::to_string(100 + i), label, x});
  }
  return items;
}

}  // namespace

TEST_SUITE("siamese-train") {
  TEST_CASE("loss examples") {
    std::mt19937_64 rng(51);
    const Vector z = unit(random_matrix(6, 1, rng).col(0));
    CHECK(contrastive_loss(z, z, PairLabel::kMatching, 0.8) == 0.0);
    Vector far = Vector::Zero(6);
    far[0] = 1.0;
    Vector far2 = Vector::Zero(6);
    far2[1] = 1.0;  // D = sqrt(2) > 0.8
    CHECK(contrastive_loss(far, far2, PairLabel::kNonMatching, 0.8) == 0.0);
    CHECK(contrastive_loss(far, far, PairLabel::kNonMatching, 0.8) == doctest::Approx(0.32).epsilon(1e-15));
    // D exactly the margin
    CHECK(contrastive_loss(far, far2, PairLabel::kNonMatching, std::sqrt(2.0)) == 0.0);
  }

  TEST_CASE("loss is symmetric") {
    std::mt19937_64 rng(52);
    for (int rep = 0; rep < 100; ++rep) {
      const Vector a = unit(random_matrix(5, 1, rng).col(0));
      const Vector b = unit(random_matrix(5, 1, rng).col(0));
      for (PairLabel y : {PairLabel::kMatching, PairLabel::kNonMatching}) {
        CHECK(contrastive_loss(a, b, y, 0.8 + rep * 0.01) == contrastive_loss(b, a, y, 0.8 + rep * 0.01));
      }
    }
  }

  TEST_CASE("zero gradients at the minimum and past the margin") {
    std::mt19937_64 rng(53);
    const GmmModel g = random_gmm(2, 3, rng);
    const LocalDescriptorSet x(random_matrix(4, 3, rng));
    const FisherVector z = fv_encode(x, g);
    const FvGradients grads = normalized_chain(z.raw, fv_grads(x, g));
    PairGrads pg = loss_backward(z, z, PairLabel::kMatching, 0.8, grads, grads);
    CHECK(pg.gmm.means.cwiseAbs().maxCoeff() == 0.0);
    CHECK(pg.x_left.cwiseAbs().maxCoeff() == 0.0);

    const LocalDescriptorSet y(random_matrix(4, 3, rng));
    const FisherVector zy = fv_encode(y, g);
    const FvGradients gy = normalized_chain(zy.raw, fv_grads(y, g));
    const double d = (z.normalized - zy.normalized).norm();
    pg = loss_backward(z, zy, PairLabel::kNonMatching, 0.5 * d, grads, gy);
    CHECK(pg.gmm.stddevs.cwiseAbs().maxCoeff() == 0.0);
    CHECK(pg.gmm.weights.cwiseAbs().maxCoeff() == 0.0);
    CHECK(pg.x_right.cwiseAbs().maxCoeff() == 0.0);

    const LossUpstream at_zero = contrastive_upstream(z.normalized, z.normalized, PairLabel::kNonMatching, 0.8);
    CHECK(at_zero.loss == doctest::Approx(0.32));
    CHECK(at_zero.d_left.cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("upstream gradients by hand") {
    Vector a(2), b(2);
    a << 1.0, 0.0;
    b << 0.0, 1.0;
    const LossUpstream m = contrastive_upstream(a, b, PairLabel::kMatching, 0.8);
    CHECK(m.d_left == a - b);
    CHECK(m.d_right == b - a);
    const double d = std::sqrt(2.0);
    const LossUpstream n = contrastive_upstream(a, b, PairLabel::kNonMatching, 2.0);
    const Vector expect = -(2.0 - d) * (a - b) / d;
    CHECK((n.d_left - expect).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((n.d_right + expect).cwiseAbs().maxCoeff() < 1e-15);
  }

  TEST_CASE("sgd examples") {
    SgdConfig plain{0.001, 0.0, 0.0};
    ModelParams p = scalar_params();
    p.gmm.means(0, 0) = 0.3;
    ModelGrads v = ModelGrads::zeros_like(p);
    ModelGrads g = ModelGrads::zeros_like(p);
    const ModelParams before = p;
    CHECK(sgd_step(p, g, v, plain));
    CHECK(p.gmm.means == before.gmm.means);
    CHECK(p.gmm.weights == before.gmm.weights);
    CHECK(p.gmm.stddevs == before.gmm.stddevs);

    g.gmm.means(0, 0) = 1.0;
    CHECK(sgd_step(p, g, v, plain));
    CHECK(p.gmm.means(0, 0) == doctest::Approx(0.3 - 0.001).epsilon(1e-15));

    ModelParams q = scalar_params();
    ModelGrads vq = ModelGrads::zeros_like(q);
    const SgdConfig mom{0.001, 0.5, 0.0};
    CHECK(sgd_step(q, g, vq, mom));
    const double first = q.gmm.means(0, 0);
    CHECK(sgd_step(q, g, vq, mom));
    CHECK(first == doctest::Approx(-0.001).epsilon(1e-15));
    CHECK(q.gmm.means(0, 0) - first == doctest::Approx(-1.5 * 0.001).epsilon(1e-12));
  }

  TEST_CASE("sgd keeps the model valid and skips bad gradients") {
    std::mt19937_64 rng(54);
    ModelParams p{random_gmm(4, 2, rng).params(), BackboneModel::identity(2)};
    ModelGrads v = ModelGrads::zeros_like(p);
    ModelGrads g = ModelGrads::zeros_like(p);
    g.gmm.weights << 500.0, -10.0, 0.0, 0.0;
    g.gmm.stddevs.setConstant(1e4);
    CHECK(sgd_step(p, g, v, SgdConfig{0.01, 0.5, 0.0005}));
    CHECK(p.gmm.weights.minCoeff() > 0.0);
    CHECK(std::abs(p.gmm.weights.sum() - 1.0) < 1e-12);
    CHECK(p.gmm.stddevs.minCoeff() >= kStddevFloor);
    CHECK_NOTHROW(GmmModel(p.gmm));

    const ModelParams before = p;
    g.gmm.means(1, 1) = NAN;
    CHECK_FALSE(sgd_step(p, g, v, SgdConfig{}));
    CHECK(p.gmm.means == before.gmm.means);
    g.gmm.means(1, 1) = 0.0;
    g.backbone->weights(0, 0) = INFINITY;
    CHECK_FALSE(sgd_step(p, g, v, SgdConfig{}));
    CHECK(p.backbone->weights == before.backbone->weights);
  }

  TEST_CASE("backbone forward and backward") {
    std::mt19937_64 rng(55);
    const Matrix patches = random_matrix(5, 3, rng);
    CHECK(backbone_forward(patches, BackboneModel::identity(3)).data() == patches);
    BackboneModel b{random_matrix(3, 2, rng), random_matrix(2, 1, rng).col(0)};
    const BackboneGrads zero = backbone_backward(patches, b, Matrix::Zero(5, 2));
    CHECK(zero.weights.cwiseAbs().maxCoeff() == 0.0);
    CHECK(zero.bias.cwiseAbs().maxCoeff() == 0.0);
    const Matrix up = random_matrix(5, 2, rng);
    const BackboneGrads g = backbone_backward(patches, b, up);
    for (Eigen::Index i = 0; i < 3; ++i) {
      for (Eigen::Index k = 0; k < 2; ++k) {
        double s = 0.0;
        for (Eigen::Index t = 0; t < 5; ++t) s += patches(t, i) * up(t, k);
        CHECK(std::abs(g.weights(i, k) - s) < 1e-14);
      }
    }
    CHECK((g.bias - up.colwise().sum().transpose()).cwiseAbs().maxCoeff() < 1e-14);
    CHECK_THROWS_AS(backbone_forward(random_matrix(2, 4, rng), b), std::invalid_argument);
  }

  TEST_CASE("forced negative selection") {
    std::vector<int> labels{0, 0, 1, 2, 3, 4, 5};
    std::vector<std::string> ids{"a", "b", "c", "d", "e", "f", "g"};
    std::mt19937_64 rng(56);
    const Matrix vecs = random_matrix(7, 3, rng);
    MiningConfig cfg{20, 5};
    const auto tuples = mine_tuples(labels, ids, vecs, cfg, rng);
    CHECK(tuples.size() == 20);
    for (const auto& t : tuples) {
      // singleton classes have no positive; class 0 sees exactly 5 negatives
      CHECK(labels[t.query] == 0);
      std::set<std::size_t> negs(t.negatives.begin(), t.negatives.end());
      CHECK(negs == std::set<std::size_t>{2, 3, 4, 5, 6});
    }
    std::vector<int> small{0, 0, 1, 1};
    std::vector<std::string> small_ids{"a", "b", "c", "d"};
    CHECK_THROWS_WITH_AS(mine_tuples(small, small_ids, random_matrix(4, 2, rng), cfg, rng), "corpus too small", Error);
  }

  TEST_CASE("mined negatives match an exhaustive sort") {
    std::mt19937_64 rng(57);
    const std::size_t n = 50;
    std::vector<int> labels;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) {
      labels.push_back(static_cast<int>(i % 7));
      ids.push_back("id" + std::to_string(1000 - i));
    }
    Matrix vecs = random_matrix(static_cast<Eigen::Index>(n), 4, rng);
    vecs.row(10) = vecs.row(3);  // exact tie broken by id
    MiningConfig cfg{300, 5};
    const auto tuples = mine_tuples(labels, ids, vecs, cfg, rng);
    for (const auto& t : tuples) {
      CHECK(labels[t.positive] == labels[t.query]);
      CHECK(t.positive != t.query);
      std::vector<std::size_t> all;
      for (std::size_t k = 0; k < n; ++k) {
        if (labels[k] != labels[t.query]) all.push_back(k);
      }
      std::sort(all.begin(), all.end(), [&](std::size_t a, std::size_t b) {
        const double da = (vecs.row(static_cast<Eigen::Index>(a)) - vecs.row(static_cast<Eigen::Index>(t.query))).norm();
        const double db = (vecs.row(static_cast<Eigen::Index>(b)) - vecs.row(static_cast<Eigen::Index>(t.query))).norm();
        return da != db ? da < db : ids[a] < ids[b];
      });
      all.resize(5);
      CHECK(t.negatives == all);
    }
  }

  TEST_CASE("pair arithmetic at defaults") {
    std::mt19937_64 rng(58);
    std::vector<int> labels;
    std::vector<std::string> ids;
    for (int i = 0; i < 40; ++i) {
      labels.push_back(i % 4);
      ids.push_back("x" + std::to_string(i));
    }
    const auto tuples = mine_tuples(labels, ids, random_matrix(40, 3, rng), MiningConfig{}, rng);
    const auto pairs = tuples_to_pairs(tuples);
    CHECK(tuples.size() == 2000);
    CHECK(pairs.size() == 12000);
    CHECK(std::count_if(pairs.begin(), pairs.end(), [](const LabeledPair& p) { return p.label == PairLabel::kMatching; }) == 2000);
    for (const auto& p : pairs) CHECK(p.left != p.right);
  }

  TEST_CASE("zero learning rate leaves the model bitwise unchanged") {
    std::mt19937_64 rng(59);
    const auto items = two_class_items(6, rng);
    const GmmModel init = random_gmm(3, 3, rng, 0.5);
    TrainConfig cfg;
    cfg.sgd.learning_rate = 0.0;
    cfg.epochs = 2;
    cfg.iterations_per_epoch = 150;
    cfg.remine_every = 100;
    cfg.mining.pairs_per_mine = 50;
    const BackboneModel bb{Matrix::Identity(3, 3) + 0.1 * random_matrix(3, 3, rng), Vector::Constant(3, 0.05)};
    const TrainResult r = train(items, {}, init, bb, cfg);
    CHECK(r.gmm.weights() == init.weights());
    CHECK(r.gmm.means() == init.means());
    CHECK(r.gmm.stddevs() == init.stddevs());
    CHECK(r.backbone->weights == bb.weights);
    CHECK(r.backbone->bias == bb.bias);
  }

  TEST_CASE("two-class training lowers the loss and is reproducible") {
    std::mt19937_64 rng(60);
    const auto items = two_class_items(10, rng);
    Matrix pool(static_cast<Eigen::Index>(items.size() * 12), 3);
    for (std::size_t i = 0; i < items.size(); ++i) pool.middleRows(static_cast<Eigen::Index>(12 * i), 12) = items[i].data;
    EmConfig em;
    em.num_clusters = 3;
    const GmmModel init = em_fit(pool, em);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.iterations_per_epoch = 600;
    cfg.remine_every = 200;
    cfg.mining.pairs_per_mine = 100;
    cfg.sgd.learning_rate = 0.01;
    cfg.seed = 4;
    const TrainResult a = train(items, {}, init, BackboneModel::identity(3), cfg);
    const TrainResult b = train(items, {}, init, BackboneModel::identity(3), cfg);
    CHECK(a.log.back().mean_loss < a.log.front().mean_loss);
    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i].mean_loss == b.log[i].mean_loss);
    CHECK(a.gmm.means() == b.gmm.means());
  }

  TEST_CASE("training rejects inconsistent inputs") {
    std::mt19937_64 rng(61);
    auto items = two_class_items(3, rng);
    const GmmModel init = random_gmm(2, 3, rng);
    TrainConfig cfg;
    cfg.epochs = 0;
    CHECK_THROWS_AS(train(items, {}, init, std::nullopt, cfg), std::invalid_argument);
    cfg.epochs = 1;
    items[2].data = random_matrix(4, 5, rng);
    CHECK_THROWS_AS(train(items, {}, init, std::nullopt, cfg), Error);
  }
}
