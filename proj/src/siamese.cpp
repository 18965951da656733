#include "siamfv/siamese.hpp"

#include "siamfv/error.hpp"
#include "siamfv/kernels.hpp"
#include "siamfv/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace siamfv {
namespace {

Matrix reshape_rows(const Vector& flat, Eigen::Index rows, Eigen::Index cols) {
  Matrix out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) out.row(r) = flat.segment(r * cols, cols).transpose();
  return out;
}

template <typename P, typename G>
void momentum_update(P& param, const G& grad, G& velocity, const SgdConfig& cfg) {
  velocity = cfg.momentum * velocity - cfg.learning_rate * (grad + cfg.weight_decay * param);
  param += velocity;
}

}  // namespace

double contrastive_loss(const Vector& z, const Vector& z_other, PairLabel label, double margin) {
  if (z.size() != z_other.size()) throw std::invalid_argument("contrastive_loss: length mismatch");
  if (!(margin > 0.0)) throw std::invalid_argument("contrastive_loss: margin must be positive");
  const double dist = (z - z_other).norm();
  if (label == PairLabel::kMatching) return 0.5 * dist * dist;
  const double gap = std::max(0.0, margin - dist);
  return 0.5 * gap * gap;
}

double contrastive_loss(const FisherVector& z, const FisherVector& z_other, PairLabel label, double margin) {
  return contrastive_loss(z.normalized, z_other.normalized, label, margin);
}

LossUpstream contrastive_upstream(const Vector& z, const Vector& z_other, PairLabel label, double margin) {
  LossUpstream up;
  up.loss = contrastive_loss(z, z_other, label, margin);
  const Vector delta = z - z_other;
  if (label == PairLabel::kMatching) {
    up.d_left = delta;
  } else {
    const double dist = delta.norm();
    if (dist < margin && dist > 0.0) {
      up.d_left = (-(margin - dist) / dist) * delta;
    } else {
      up.d_left = Vector::Zero(delta.size());
    }
  }
  up.d_right = -up.d_left;
  return up;
}

PairGrads loss_backward(const FisherVector& z, const FisherVector& z_other, PairLabel label, double margin,
                        const FvGradients& grads, const FvGradients& grads_other) {
  if (grads.clusters != grads_other.clusters || grads.dim != grads_other.dim) {
    throw std::invalid_argument("loss_backward: branches use different models");
  }
  const LossUpstream up = contrastive_upstream(z.normalized, z_other.normalized, label, margin);
  PairGrads out;
  out.gmm.weights = grads.d_omega * up.d_left + grads_other.d_omega * up.d_right;
  const auto c = static_cast<Eigen::Index>(grads.clusters);
  const auto d = static_cast<Eigen::Index>(grads.dim);
  out.gmm.means = reshape_rows(grads.d_mu * up.d_left + grads_other.d_mu * up.d_right, c, d);
  out.gmm.stddevs = reshape_rows(grads.d_sigma * up.d_left + grads_other.d_sigma * up.d_right, c, d);
  out.x_left = reshape_rows(grads.d_x * up.d_left, static_cast<Eigen::Index>(grads.count), d);
  out.x_right = reshape_rows(grads_other.d_x * up.d_right, static_cast<Eigen::Index>(grads_other.count), d);
  return out;
}

BackboneModel BackboneModel::identity(std::size_t dim) {
  const auto d = static_cast<Eigen::Index>(dim);
  return BackboneModel{Matrix::Identity(d, d), Vector::Zero(d)};
}

LocalDescriptorSet backbone_forward(const Matrix& raw_patches, const BackboneModel& backbone) {
  if (static_cast<std::size_t>(raw_patches.cols()) != backbone.raw_dim() ||
      backbone.bias.size() != backbone.weights.cols()) {
    throw std::invalid_argument("backbone_forward: shape mismatch");
  }
  Matrix x = raw_patches * backbone.weights;
  x.rowwise() += backbone.bias.transpose();
  return LocalDescriptorSet(std::move(x));
}

BackboneGrads backbone_backward(const Matrix& raw_patches, const BackboneModel& backbone, const Matrix& upstream) {
  if (static_cast<std::size_t>(raw_patches.cols()) != backbone.raw_dim() ||
      upstream.rows() != raw_patches.rows() || static_cast<std::size_t>(upstream.cols()) != backbone.dim()) {
    throw std::invalid_argument("backbone_backward: shape mismatch");
  }
  return BackboneGrads{raw_patches.transpose() * upstream, upstream.colwise().sum().transpose()};
}

ModelGrads ModelGrads::zeros_like(const ModelParams& params) {
  ModelGrads g{GmmGrads::zeros(params.gmm.num_clusters(), params.gmm.dim()), std::nullopt};
  if (params.backbone) {
    g.backbone = BackboneGrads{Matrix::Zero(params.backbone->weights.rows(), params.backbone->weights.cols()),
                               Vector::Zero(params.backbone->bias.size())};
  }
  return g;
}

bool sgd_step(ModelParams& params, const ModelGrads& grads, ModelGrads& velocity, const SgdConfig& cfg) {
  if (!grads.gmm.all_finite()) return false;
  if (params.backbone && grads.backbone &&
      !(grads.backbone->weights.allFinite() && grads.backbone->bias.allFinite())) {
    return false;
  }
  momentum_update(params.gmm.weights, grads.gmm.weights, velocity.gmm.weights, cfg);
  momentum_update(params.gmm.means, grads.gmm.means, velocity.gmm.means, cfg);
  momentum_update(params.gmm.stddevs, grads.gmm.stddevs, velocity.gmm.stddevs, cfg);
  if (params.backbone && grads.backbone && velocity.backbone) {
    momentum_update(params.backbone->weights, grads.backbone->weights, velocity.backbone->weights, cfg);
    momentum_update(params.backbone->bias, grads.backbone->bias, velocity.backbone->bias, cfg);
  }

  Vector& w = params.gmm.weights;
  bool clamped = false;
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    if (!(w[j] >= kWeightFloor)) {
      w[j] = kWeightFloor;
      clamped = true;
    }
  }
  const double sum = w.sum();
  if (clamped || std::abs(sum - 1.0) > 1e-12) w /= sum;
  params.gmm.stddevs = params.gmm.stddevs.cwiseMax(kStddevFloor);
  return true;
}

std::vector<MiningTuple> mine_tuples(std::span<const int> labels, std::span<const std::string> ids,
                                     const Matrix& vectors, const MiningConfig& cfg, std::mt19937_64& rng) {
  const std::size_t n = labels.size();
  if (ids.size() != n || static_cast<std::size_t>(vectors.rows()) != n) {
    throw std::invalid_argument("mine_tuples: size mismatch");
  }
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t same = 0, other = 0;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == i) continue;
      (labels[k] == labels[i] ? same : other) += 1;
    }
    if (other < cfg.negatives_per_pair) throw Error("corpus too small");
    if (same > 0) eligible.push_back(i);
  }
  if (eligible.empty()) throw Error("corpus too small");

  std::vector<MiningTuple> tuples(cfg.pairs_per_mine);
  std::uniform_int_distribution<std::size_t> pick_query(0, eligible.size() - 1);
  for (auto& tuple : tuples) {
    tuple.query = eligible[pick_query(rng)];
    std::vector<std::size_t> positives;
    for (std::size_t k = 0; k < n; ++k) {
      if (k != tuple.query && labels[k] == labels[tuple.query]) positives.push_back(k);
    }
    std::uniform_int_distribution<std::size_t> pick_pos(0, positives.size() - 1);
    tuple.positive = positives[pick_pos(rng)];
  }

  const auto count = static_cast<std::ptrdiff_t>(tuples.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    MiningTuple& tuple = tuples[i];
    const auto q = static_cast<Eigen::Index>(tuple.query);
    std::vector<std::pair<double, std::size_t>> candidates;
    for (std::size_t k = 0; k < n; ++k) {
      if (labels[k] == labels[tuple.query]) continue;
      candidates.emplace_back((vectors.row(static_cast<Eigen::Index>(k)) - vectors.row(q)).squaredNorm(), k);
    }
    const auto take = static_cast<std::ptrdiff_t>(cfg.negatives_per_pair);
    std::partial_sort(candidates.begin(), candidates.begin() + take, candidates.end(),
                      [&](const auto& a, const auto& b) {
                        if (a.first != b.first) return a.first < b.first;
                        return ids[a.second] < ids[b.second];
                      });
    for (std::ptrdiff_t k = 0; k < take; ++k) tuple.negatives.push_back(candidates[k].second);
  }
  return tuples;
}

std::vector<LabeledPair> tuples_to_pairs(std::span<const MiningTuple> tuples) {
  std::vector<LabeledPair> pairs;
  for (const auto& t : tuples) pairs.push_back({t.query, t.positive, PairLabel::kMatching});
  for (const auto& t : tuples) {
    for (std::size_t neg : t.negatives) pairs.push_back({t.query, neg, PairLabel::kNonMatching});
  }
  return pairs;
}

Matrix encode_items(std::span<const TrainItem> items, const GmmParams& gmm,
                    const std::optional<BackboneModel>& backbone, PosteriorMode mode) {
  std::vector<Matrix> sets;
  sets.reserve(items.size());
  for (const auto& item : items) {
    sets.push_back(backbone ? backbone_forward(item.data, *backbone).data() : item.data);
  }
  return kernels::encode_batch(sets, gmm, mode);
}

double items_map(std::span<const TrainItem> items, const GmmParams& gmm,
                 const std::optional<BackboneModel>& backbone, PosteriorMode mode) {
  std::vector<int> labels;
  std::vector<std::string> ids;
  for (const auto& item : items) {
    labels.push_back(item.class_label);
    ids.push_back(item.id);
  }
  return leave_one_out_map(encode_items(items, gmm, backbone, mode), labels, ids);
}

TrainResult train(std::span<const TrainItem> items, std::span<const TrainItem> eval_items, const GmmModel& init,
                  std::optional<BackboneModel> backbone, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  if (!(cfg.margin > 0.0) || !(cfg.sgd.learning_rate >= 0.0) || cfg.epochs < 1 || cfg.remine_every < 1 ||
      cfg.iterations_per_epoch < 1 || cfg.mining.pairs_per_mine < 1) {
    throw std::invalid_argument("train: invalid configuration");
  }
  const std::size_t want_dim = backbone ? backbone->raw_dim() : init.dim();
  if (backbone && backbone->dim() != init.dim()) throw Error("backbone output does not match the GMM dimension");
  for (const auto& item : items) {
    if (static_cast<std::size_t>(item.data.cols()) != want_dim) throw Error("item " + item.id + ": dimension mismatch");
  }
  for (const auto& item : eval_items) {
    if (static_cast<std::size_t>(item.data.cols()) != want_dim) throw Error("item " + item.id + ": dimension mismatch");
  }

  std::vector<int> labels;
  std::vector<std::string> ids;
  for (const auto& item : items) {
    labels.push_back(item.class_label);
    ids.push_back(item.id);
  }

  std::mt19937_64 rng(cfg.seed);
  ModelParams params{init.params(), std::move(backbone)};
  ModelGrads velocity = ModelGrads::zeros_like(params);
  std::vector<LabeledPair> pairs;
  std::size_t cursor = 0;
  std::size_t iteration = 0;
  TrainResult result{init, params.backbone, {}};

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t scored = 0;
    EpochMetrics metrics;
    metrics.epoch = epoch;
    for (std::size_t i = 0; i < cfg.iterations_per_epoch; ++i, ++iteration) {
      if (iteration % cfg.remine_every == 0) {
        const Matrix fvs = encode_items(items, params.gmm, params.backbone, cfg.mode);
        const auto tuples = mine_tuples(labels, ids, fvs, cfg.mining, rng);
        pairs = tuples_to_pairs(tuples);
        std::shuffle(pairs.begin(), pairs.end(), rng);
        cursor = 0;
      }
      const LabeledPair& pair = pairs[cursor++ % pairs.size()];
      const TrainItem& left = items[pair.left];
      const TrainItem& right = items[pair.right];

      ModelGrads grads = ModelGrads::zeros_like(params);
      try {
        const Matrix x_left = params.backbone ? backbone_forward(left.data, *params.backbone).data() : left.data;
        const Matrix x_right = params.backbone ? backbone_forward(right.data, *params.backbone).data() : right.data;
        const auto f_left = detail::fv_forward(x_left, params.gmm, cfg.mode);
        const auto f_right = detail::fv_forward(x_right, params.gmm, cfg.mode);
        const LossUpstream up = contrastive_upstream(f_left.normalized, f_right.normalized, pair.label, cfg.margin);
        loss_sum += up.loss;
        ++scored;
        if (up.loss > 0.0) {
          const auto b_left = detail::fv_backward(x_left, params.gmm, cfg.mode, f_left, up.d_left);
          const auto b_right = detail::fv_backward(x_right, params.gmm, cfg.mode, f_right, up.d_right);
          grads.gmm = b_left.gmm;
          grads.gmm += b_right.gmm;
          if (params.backbone) {
            BackboneGrads g = backbone_backward(left.data, *params.backbone, b_left.x);
            const BackboneGrads g_right = backbone_backward(right.data, *params.backbone, b_right.x);
            g.weights += g_right.weights;
            g.bias += g_right.bias;
            grads.backbone = std::move(g);
          }
        }
      } catch (const Error&) {
        ++metrics.skipped_steps;
        continue;
      } catch (const std::invalid_argument&) {
        // a non-finite descriptor out of the backbone
        ++metrics.skipped_steps;
        continue;
      }
      if (!sgd_step(params, grads, velocity, cfg.sgd)) ++metrics.skipped_steps;
    }
    metrics.mean_loss = scored > 0 ? loss_sum / static_cast<double>(scored) : 0.0;
    if (!eval_items.empty()) metrics.map_eval = items_map(eval_items, params.gmm, params.backbone, cfg.mode);
    result.log.push_back(metrics);
    if (on_epoch) on_epoch(metrics);
  }
  result.gmm = GmmModel(params.gmm);
  result.backbone = params.backbone;
  return result;
}

}  // namespace siamfv
