#pragma once

// Labelled synthetic descriptor sets. Each class owns a few pattern centres in
// the first half of the dimensions ("signal"); every item additionally carries
// a large random offset in the remaining dimensions ("nuisance") shared by all
// of its descriptors. An untrained encoder is dominated by the nuisance
// offsets; a backbone that learns to suppress them recovers the classes.

#include "siamfv/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace siamfv {

struct SynthConfig {
  std::size_t classes = 20;
  std::size_t items_per_class = 20;
  std::size_t descriptors_per_item = 64;
  std::size_t dim = 16;
  std::uint64_t seed = 0;
  double eval_fraction = 0.25;  // share of classes held out for evaluation
  std::size_t patterns_per_class = 4;
  double pattern_spread = 1.0;
  double signal_noise = 0.6;
  double nuisance_offset = 2.0;
  double nuisance_noise = 0.5;
  std::string dataset_tag;  // defaults to "synth-<seed>"
};

struct SynthItem {
  std::string id;
  int class_label = 0;
  Matrix patches;  // descriptors_per_item x dim
  bool held_out = false;
};

struct SynthDataset {
  std::string dataset_tag;
  std::vector<SynthItem> items;  // training classes first, then held-out ones
};

SynthDataset generate_synth(const SynthConfig& cfg);

// Writes DIR/manifest.json and DIR/items/<id>.fvd (raw_patch_path entries).
void write_synth(const std::filesystem::path& dir, const SynthDataset& data);

}  // namespace siamfv
