#include "siamfv/retrieval.hpp"

#include "siamfv/error.hpp"
#include "siamfv/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

namespace siamfv {
namespace {

std::vector<std::size_t> order_by_distance(const std::vector<double>& dist,
                                           const std::vector<const std::string*>& ids) {
  std::vector<std::size_t> order(dist.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dist[a] != dist[b]) return dist[a] < dist[b];
    return *ids[a] < *ids[b];
  });
  return order;
}

}  // namespace

Vector baseline_pool(const LocalDescriptorSet& descriptors, PoolMode mode) {
  const Matrix& x = descriptors.data();
  Vector pooled = mode == PoolMode::kSum ? Vector(x.colwise().sum().transpose())
                                         : Vector(x.colwise().maxCoeff().transpose());
  const double norm = pooled.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) throw Error("degenerate pooled vector");
  return pooled / norm;
}

GalleryIndex::GalleryIndex(std::vector<GalleryItem> items, std::vector<GalleryQuery> queries)
    : items_(std::move(items)), queries_(std::move(queries)) {
  if (!items_.empty()) dim_ = static_cast<std::size_t>(items_.front().vector.size());
  std::set<std::string> seen;
  for (const auto& item : items_) {
    if (static_cast<std::size_t>(item.vector.size()) != dim_) {
      throw std::invalid_argument("gallery: vectors differ in length (" + item.id + ")");
    }
    if (std::abs(item.vector.norm() - 1.0) > 1e-8) {
      throw std::invalid_argument("gallery: vector is not unit norm (" + item.id + ")");
    }
    if (!seen.insert(item.id).second) throw std::invalid_argument("gallery: duplicate id " + item.id);
  }
  for (const auto& q : queries_) {
    if (!seen.count(q.id)) throw std::invalid_argument("gallery: unknown query id " + q.id);
  }
}

const GalleryItem& GalleryIndex::item(const std::string& id) const {
  for (const auto& it : items_) {
    if (it.id == id) return it;
  }
  throw std::out_of_range("gallery: unknown item " + id);
}

const GalleryQuery* GalleryIndex::query(const std::string& id) const {
  for (const auto& q : queries_) {
    if (q.id == id) return &q;
  }
  return nullptr;
}

std::vector<std::string> rank(const Vector& query, const GalleryIndex& gallery) {
  const auto& items = gallery.items();
  if (items.empty()) return {};
  if (static_cast<std::size_t>(query.size()) != gallery.dim()) {
    throw std::invalid_argument("rank: query dimension does not match the gallery");
  }
  std::vector<double> dist(items.size());
  std::vector<const std::string*> ids(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    dist[i] = (items[i].vector - query).squaredNorm();
    ids[i] = &items[i].id;
  }
  std::vector<std::string> out;
  out.reserve(items.size());
  for (std::size_t i : order_by_distance(dist, ids)) out.push_back(items[i].id);
  return out;
}

double average_precision(std::span<const std::string> ranked, const std::set<std::string>& relevant,
                         const std::set<std::string>& ignore) {
  if (relevant.empty()) throw Error("undefined AP");
  double sum = 0.0;
  std::size_t position = 0;
  std::size_t hits = 0;
  for (const auto& id : ranked) {
    if (ignore.count(id)) continue;
    ++position;
    if (relevant.count(id)) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(position);
    }
  }
  return sum / static_cast<double>(relevant.size());
}

double mean_average_precision(std::span<const RankedQuery> queries, const GalleryIndex& gallery) {
  if (queries.empty()) throw Error("mAP over zero queries");
  double sum = 0.0;
  for (const auto& q : queries) {
    const GalleryQuery* spec = gallery.query(q.query_id);
    if (spec == nullptr) throw std::invalid_argument("mAP: query without relevance set: " + q.query_id);
    sum += average_precision(q.ranking, spec->relevant, spec->ignore);
  }
  return sum / static_cast<double>(queries.size());
}

EvalReport evaluate(const GalleryIndex& gallery) {
  const auto& items = gallery.items();
  const auto& queries = gallery.queries();
  if (queries.empty()) throw Error("mAP over zero queries");

  Matrix item_mat(static_cast<Eigen::Index>(items.size()), static_cast<Eigen::Index>(gallery.dim()));
  std::unordered_map<std::string, std::size_t> index;
  std::vector<const std::string*> ids(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    item_mat.row(static_cast<Eigen::Index>(i)) = items[i].vector.transpose();
    index.emplace(items[i].id, i);
    ids[i] = &items[i].id;
  }
  Matrix query_mat(static_cast<Eigen::Index>(queries.size()), item_mat.cols());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    query_mat.row(static_cast<Eigen::Index>(q)) = item_mat.row(static_cast<Eigen::Index>(index.at(queries[q].id)));
  }
  const Matrix dist = kernels::squared_distances(query_mat, item_mat);

  std::vector<RankedQuery> ranked(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    std::vector<double> row(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) row[i] = dist(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(i));
    ranked[q].query_id = queries[q].id;
    for (std::size_t i : order_by_distance(row, ids)) {
      if (items[i].id != queries[q].id) ranked[q].ranking.push_back(items[i].id);
    }
  }

  EvalReport report;
  double sum = 0.0;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const double ap = average_precision(ranked[q].ranking, queries[q].relevant, queries[q].ignore);
    report.queries.push_back({queries[q].id, ap});
    sum += ap;
  }
  report.mean_average_precision = sum / static_cast<double>(queries.size());
  return report;
}

double leave_one_out_map(const Matrix& vectors, std::span<const int> labels, std::span<const std::string> ids) {
  const auto n = static_cast<std::size_t>(vectors.rows());
  if (labels.size() != n || ids.size() != n) throw std::invalid_argument("leave_one_out_map: size mismatch");
  const Matrix dist = kernels::squared_distances(vectors, vectors);
  std::vector<const std::string*> id_ptrs(n);
  for (std::size_t i = 0; i < n; ++i) id_ptrs[i] = &ids[i];

  double sum = 0.0;
  std::size_t scored = 0;
  for (std::size_t q = 0; q < n; ++q) {
    std::size_t relevant = 0;
    for (std::size_t i = 0; i < n; ++i) relevant += (i != q && labels[i] == labels[q]);
    if (relevant == 0) continue;
    std::vector<double> row(n);
    for (std::size_t i = 0; i < n; ++i) row[i] = dist(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(i));
    std::size_t position = 0, hits = 0;
    double ap = 0.0;
    for (std::size_t i : order_by_distance(row, id_ptrs)) {
      if (i == q) continue;
      ++position;
      if (labels[i] == labels[q]) {
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(position);
      }
    }
    sum += ap / static_cast<double>(relevant);
    ++scored;
  }
  if (scored == 0) throw Error("mAP over zero queries");
  return sum / static_cast<double>(scored);
}

}  // namespace siamfv
