#pragma once

#include "siamfv/fv_grad.hpp"
#include "siamfv/types.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace siamfv {

// Y = 1 for matching pairs: the squared-distance term applies to them.
enum class PairLabel : int { kNonMatching = 0, kMatching = 1 };

// L = 1/2 Y D^2 + 1/2 (1 - Y) max(0, margin - D)^2 on normalized vectors.
double contrastive_loss(const Vector& z, const Vector& z_other, PairLabel label, double margin);
double contrastive_loss(const FisherVector& z, const FisherVector& z_other, PairLabel label, double margin);

// dL/dz and dL/dz' for one pair. At the hinge kink (D == margin) and at D == 0
// in the hinge branch the subgradient 0 is used.
struct LossUpstream {
  double loss = 0.0;
  Vector d_left;
  Vector d_right;
};
LossUpstream contrastive_upstream(const Vector& z, const Vector& z_other, PairLabel label, double margin);

// Gradient of the pair loss with respect to the shared mixture parameters and
// to each branch's descriptors.
struct PairGrads {
  GmmGrads gmm;
  Matrix x_left;   // T x d
  Matrix x_right;  // T' x d
};

// Chains dL/dz through normalized-vector Jacobians (from normalized_chain) of
// both branches.
PairGrads loss_backward(const FisherVector& z, const FisherVector& z_other, PairLabel label, double margin,
                        const FvGradients& grads, const FvGradients& grads_other);

// Single affine layer applied to every raw patch: x_t = W^T p_t + b.
struct BackboneModel {
  Matrix weights;  // raw_dim x dim
  Vector bias;     // dim

  static BackboneModel identity(std::size_t dim);
  std::size_t raw_dim() const { return static_cast<std::size_t>(weights.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(weights.cols()); }
};

struct BackboneGrads {
  Matrix weights;
  Vector bias;
};

LocalDescriptorSet backbone_forward(const Matrix& raw_patches, const BackboneModel& backbone);
BackboneGrads backbone_backward(const Matrix& raw_patches, const BackboneModel& backbone,
                                const Matrix& upstream);

struct SgdConfig {
  double learning_rate = 0.001;
  double momentum = 0.5;
  double weight_decay = 0.0005;
};

struct ModelParams {
  GmmParams gmm;
  std::optional<BackboneModel> backbone;
};

struct ModelGrads {
  GmmGrads gmm;
  std::optional<BackboneGrads> backbone;

  static ModelGrads zeros_like(const ModelParams& params);
};

inline constexpr double kWeightFloor = 1e-6;

// v <- momentum v - lr (g + wd p); p <- p + v. Then weights are clamped to
// kWeightFloor and put back on the simplex, stddevs floored. Returns false and
// leaves everything untouched when a gradient is non-finite.
bool sgd_step(ModelParams& params, const ModelGrads& grads, ModelGrads& velocity, const SgdConfig& cfg);

struct MiningConfig {
  std::size_t pairs_per_mine = 2000;
  std::size_t negatives_per_pair = 5;
};

struct MiningTuple {
  std::size_t query = 0;
  std::size_t positive = 0;
  std::vector<std::size_t> negatives;
};

struct LabeledPair {
  std::size_t left = 0;
  std::size_t right = 0;
  PairLabel label = PairLabel::kNonMatching;
};

// Samples matching pairs uniformly and attaches the closest non-matching items
// to each query (Euclidean distance between the rows of `vectors`, ties by id).
std::vector<MiningTuple> mine_tuples(std::span<const int> labels, std::span<const std::string> ids,
                                     const Matrix& vectors, const MiningConfig& cfg, std::mt19937_64& rng);

std::vector<LabeledPair> tuples_to_pairs(std::span<const MiningTuple> tuples);

struct TrainConfig {
  double margin = 0.8;
  SgdConfig sgd;
  int epochs = 30;
  MiningConfig mining;
  std::size_t remine_every = 2000;
  std::size_t iterations_per_epoch = 6000;
  std::uint64_t seed = 0;
  PosteriorMode mode = PosteriorMode::kUnweighted;
};

struct TrainItem {
  std::string id;
  int class_label = 0;
  Matrix data;  // raw patches when a backbone is trained, descriptors otherwise
};

struct EpochMetrics {
  int epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> map_eval;
  std::size_t skipped_steps = 0;
};

struct TrainResult {
  GmmModel gmm;
  std::optional<BackboneModel> backbone;
  std::vector<EpochMetrics> log;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Encodes items with the current model (through the backbone if present).
Matrix encode_items(std::span<const TrainItem> items, const GmmParams& gmm,
                    const std::optional<BackboneModel>& backbone, PosteriorMode mode);

// Leave-one-out mAP of `items` encoded with the given model.
double items_map(std::span<const TrainItem> items, const GmmParams& gmm,
                 const std::optional<BackboneModel>& backbone, PosteriorMode mode);

// Siamese training with single-pair SGD iterations and periodic hard-negative
// re-mining. When `backbone` is set the items carry raw patches and the
// backbone is trained jointly. `eval_items`, if non-empty, are scored after
// every epoch.
TrainResult train(std::span<const TrainItem> items, std::span<const TrainItem> eval_items, const GmmModel& init,
                  std::optional<BackboneModel> backbone, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

}  // namespace siamfv
