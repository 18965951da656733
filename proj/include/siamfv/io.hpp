#pragma once

// File formats. All binary formats are little-endian.
//  FVD1  descriptors: "FVD1", u32 T, u32 d, u32 0, then T*d float32 row-major.
//  FVG1  mixture:     "FVG1", u32 C, u32 d, then weights, means, stddevs (f64).
//  FVP1  projection:  "FVP1", u8 method (0 pca, 1 lda), u32 D, u32 m, then
//                     mean, basis (column-major), scales (f64).
//  FVB1  backbone:    "FVB1", u32 raw_dim, u32 d, then weights (row-major,
//                     raw_dim x d) and bias (f64).

#include "siamfv/projection.hpp"
#include "siamfv/siamese.hpp"
#include "siamfv/types.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace siamfv::io {

namespace fs = std::filesystem;

Matrix read_fvd1(const fs::path& path);
void write_fvd1(const fs::path& path, const Matrix& data);

GmmModel read_fvg1(const fs::path& path);
void write_fvg1(const fs::path& path, const GmmModel& gmm);

ProjectionModel read_fvp1(const fs::path& path);
void write_fvp1(const fs::path& path, const ProjectionModel& model);

BackboneModel read_fvb1(const fs::path& path);
void write_fvb1(const fs::path& path, const BackboneModel& backbone);

// Training manifest:
//   {"dataset_tag": "...", "items": [...], "eval_items": [...]}
// with items {"id", "class_label", "descriptor_path" | "raw_patch_path"}.
// Paths are relative to the manifest's directory.
struct ManifestItem {
  std::string id;
  int class_label = 0;
  fs::path path;  // resolved
  bool raw_patches = false;
};

struct TrainManifest {
  std::string dataset_tag;
  std::vector<ManifestItem> items;
  std::vector<ManifestItem> eval_items;
};

// Validates the document and that every referenced file exists.
TrainManifest read_train_manifest(const fs::path& path);
// Paths are written relative to the manifest's directory.
void write_train_manifest(const fs::path& path, const TrainManifest& manifest);

// Gallery manifest:
//   {"items": [{"id", "vector_path" | "descriptor_path", "dataset_tag",
//               "class_label"?}],
//    "queries": [{"id", "relevant": [...], "ignore": [...]}]}
struct GalleryEntry {
  std::string id;
  fs::path path;  // resolved
  bool is_vector = true;  // vector_path (FVD1 with T=1) vs descriptor_path
  std::string dataset_tag;
  std::optional<int> class_label;
};

struct GalleryQueryEntry {
  std::string id;
  std::vector<std::string> relevant;
  std::vector<std::string> ignore;
};

struct GalleryManifest {
  std::vector<GalleryEntry> items;
  std::vector<GalleryQueryEntry> queries;
};

GalleryManifest read_gallery_manifest(const fs::path& path);
void write_gallery_manifest(const fs::path& path, const GalleryManifest& manifest);

// Loads an item's matrix, widening float32 to double.
Matrix load_item(const ManifestItem& item);

// Writes `text` to `path`, creating parent directories.
void write_text(const fs::path& path, const std::string& text);

}  // namespace siamfv::io
