#pragma once

// Aggregator comparison on synthetic data: FV vs sum pooling vs max pooling,
// each reduced by PCA- and LDA-whitening to several output sizes. Projections
// and the GMM are fitted on one synthetic dataset and scored on a disjoint
// one (leave-one-out mAP, relevant = same class).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace siamfv {

struct CompareConfig {
  std::uint64_t seed = 0;
  std::size_t dim = 512;
  std::size_t clusters = 8;
  std::size_t descriptors_per_item = 32;
  std::size_t fit_classes = 130;
  std::size_t fit_items_per_class = 5;
  std::size_t eval_classes = 20;
  std::size_t eval_items_per_class = 10;
  std::vector<std::size_t> output_dims{128, 256, 512};
  // Siamese epochs on the fit dataset before encoding (0 = EM-initialized FV).
  int train_epochs = 0;
  std::size_t iterations_per_epoch = 6000;
};

struct CompareCell {
  std::optional<double> map;  // empty when the reduction is not possible
  std::string note;
};

struct CompareRow {
  std::string aggregator;  // "FV", "SIAM-FV", "SUM Pool", "MAC"
  std::string reduction;   // "none", "PCA-w", "LDA-w"
  std::size_t native_dim = 0;
  std::vector<CompareCell> cells;  // one per output dim; a single cell for "none"
};

struct CompareReport {
  CompareConfig config;
  std::string fit_dataset;
  std::string eval_dataset;
  std::vector<CompareRow> rows;

  std::string to_json() const;
  std::string to_table() const;
};

CompareReport run_comparison(const CompareConfig& cfg);

}  // namespace siamfv
