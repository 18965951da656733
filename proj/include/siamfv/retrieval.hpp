#pragma once

#include "siamfv/types.hpp"

#include <set>
#include <span>
#include <string>
#include <vector>

namespace siamfv {

enum class PoolMode { kSum, kMax };

// Sum- or max-pooling of the descriptors followed by L2 normalization.
// Throws Error("degenerate pooled vector") if the pooled vector is zero.
Vector baseline_pool(const LocalDescriptorSet& descriptors, PoolMode mode);

struct GalleryItem {
  std::string id;
  Vector vector;
  std::string dataset_tag;
};

struct GalleryQuery {
  std::string id;
  std::set<std::string> relevant;
  std::set<std::string> ignore;  // junk items, dropped from the ranking
};

// Exact brute-force gallery. All vectors share one length and have unit norm
// (1e-8); query ids must name gallery items.
class GalleryIndex {
 public:
  GalleryIndex(std::vector<GalleryItem> items, std::vector<GalleryQuery> queries);

  const std::vector<GalleryItem>& items() const { return items_; }
  const std::vector<GalleryQuery>& queries() const { return queries_; }
  std::size_t dim() const { return dim_; }
  const GalleryItem& item(const std::string& id) const;
  const GalleryQuery* query(const std::string& id) const;

 private:
  std::vector<GalleryItem> items_;
  std::vector<GalleryQuery> queries_;
  std::size_t dim_ = 0;
};

// Gallery ids by ascending Euclidean distance; ties broken by id.
std::vector<std::string> rank(const Vector& query, const GalleryIndex& gallery);

// Non-interpolated AP. Ignored ids are removed from the ranking first; relevant
// items missing from the ranking count as never retrieved.
double average_precision(std::span<const std::string> ranked, const std::set<std::string>& relevant,
                         const std::set<std::string>& ignore = {});

struct RankedQuery {
  std::string query_id;
  std::vector<std::string> ranking;
};

double mean_average_precision(std::span<const RankedQuery> queries, const GalleryIndex& gallery);

struct QueryResult {
  std::string id;
  double average_precision = 0.0;
};

struct EvalReport {
  double mean_average_precision = 0.0;
  std::vector<QueryResult> queries;
};

// Ranks every gallery query against the gallery (the query item itself is
// left out of its own ranking) and scores it.
EvalReport evaluate(const GalleryIndex& gallery);

// Leave-one-out mAP over a labelled set of unit vectors: each row queries all
// other rows, relevant = same label. Ties broken by id.
double leave_one_out_map(const Matrix& vectors, std::span<const int> labels,
                         std::span<const std::string> ids);

}  // namespace siamfv
