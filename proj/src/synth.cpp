#include "siamfv/synth.hpp"

#include "siamfv/io.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

namespace siamfv {

SynthDataset generate_synth(const SynthConfig& cfg) {
  if (cfg.classes < 2 || cfg.items_per_class < 1 || cfg.descriptors_per_item < 1 || cfg.dim < 2 ||
      cfg.patterns_per_class < 1) {
    throw std::invalid_argument("synth: need at least 2 classes, 1 item, 1 descriptor and 2 dimensions");
  }
  if (!(cfg.eval_fraction >= 0.0 && cfg.eval_fraction < 1.0)) {
    throw std::invalid_argument("synth: eval fraction must lie in [0, 1)");
  }
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pattern(0, cfg.patterns_per_class - 1);

  const auto d = static_cast<Eigen::Index>(cfg.dim);
  const Eigen::Index signal = d / 2;
  const auto held_out = static_cast<std::size_t>(std::floor(cfg.eval_fraction * static_cast<double>(cfg.classes)));

  SynthDataset out;
  out.dataset_tag = cfg.dataset_tag.empty() ? "synth-" + std::to_string(cfg.seed) : cfg.dataset_tag;
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    Matrix centres(static_cast<Eigen::Index>(cfg.patterns_per_class), signal);
    for (Eigen::Index i = 0; i < centres.size(); ++i) centres.data()[i] = cfg.pattern_spread * normal(rng);
    for (std::size_t n = 0; n < cfg.items_per_class; ++n) {
      SynthItem item;
      char id[32];
      std::snprintf(id, sizeof id, "c%03zu-i%03zu", c, n);
      item.id = id;
      item.class_label = static_cast<int>(c);
      item.held_out = c >= cfg.classes - held_out;
      Vector offset(d - signal);
      for (Eigen::Index k = 0; k < offset.size(); ++k) offset[k] = cfg.nuisance_offset * normal(rng);
      item.patches.resize(static_cast<Eigen::Index>(cfg.descriptors_per_item), d);
      for (Eigen::Index t = 0; t < item.patches.rows(); ++t) {
        const auto z = static_cast<Eigen::Index>(pattern(rng));
        for (Eigen::Index k = 0; k < signal; ++k) item.patches(t, k) = centres(z, k) + cfg.signal_noise * normal(rng);
        for (Eigen::Index k = signal; k < d; ++k) {
          item.patches(t, k) = offset[k - signal] + cfg.nuisance_noise * normal(rng);
        }
      }
      out.items.push_back(std::move(item));
    }
  }
  return out;
}

void write_synth(const std::filesystem::path& dir, const SynthDataset& data) {
  io::TrainManifest manifest;
  manifest.dataset_tag = data.dataset_tag;
  for (const auto& item : data.items) {
    const auto path = dir / "items" / (item.id + ".fvd");
    io::write_fvd1(path, item.patches);
    io::ManifestItem entry{item.id, item.class_label, path, true};
    (item.held_out ? manifest.eval_items : manifest.items).push_back(std::move(entry));
  }
  io::write_train_manifest(dir / "manifest.json", manifest);
}

}  // namespace siamfv
