#include "siamfv/compare.hpp"

#include "siamfv/error.hpp"
#include "siamfv/gmm_em.hpp"
#include "siamfv/kernels.hpp"
#include "siamfv/projection.hpp"
#include "siamfv/retrieval.hpp"
#include "siamfv/siamese.hpp"
#include "siamfv/synth.hpp"

#include <json.hpp>

#include <cstdio>
#include <functional>
#include <sstream>

namespace siamfv {
namespace {

struct Split {
  std::vector<TrainItem> items;
  std::vector<int> labels;
  std::vector<std::string> ids;
};

Split to_split(const SynthDataset& data) {
  Split s;
  for (const auto& item : data.items) {
    // Round through float32 as the on-disk path would.
    s.items.push_back({item.id, item.class_label, item.patches.cast<float>().cast<double>()});
    s.labels.push_back(item.class_label);
    s.ids.push_back(item.id);
  }
  return s;
}

Matrix pooled(const Split& s, PoolMode mode) {
  Matrix out(static_cast<Eigen::Index>(s.items.size()), s.items.front().data.cols());
  for (std::size_t i = 0; i < s.items.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = baseline_pool(LocalDescriptorSet(s.items[i].data), mode).transpose();
  }
  return out;
}

std::string cell_text(const CompareCell& c) {
  if (!c.map) return "n/a";
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * *c.map);
  return buf;
}

}  // namespace

CompareReport run_comparison(const CompareConfig& cfg) {
  SynthConfig fit_cfg;
  fit_cfg.classes = cfg.fit_classes;
  fit_cfg.items_per_class = cfg.fit_items_per_class;
  fit_cfg.descriptors_per_item = cfg.descriptors_per_item;
  fit_cfg.dim = cfg.dim;
  fit_cfg.seed = cfg.seed;
  fit_cfg.eval_fraction = 0.0;
  fit_cfg.dataset_tag = "synth-fit-" + std::to_string(cfg.seed);
  SynthConfig eval_cfg = fit_cfg;
  eval_cfg.classes = cfg.eval_classes;
  eval_cfg.items_per_class = cfg.eval_items_per_class;
  eval_cfg.seed = cfg.seed + 1;
  eval_cfg.dataset_tag = "synth-eval-" + std::to_string(cfg.seed);

  const SynthDataset fit_data = generate_synth(fit_cfg);
  const SynthDataset eval_data = generate_synth(eval_cfg);
  require_disjoint_datasets({fit_data.dataset_tag}, {eval_data.dataset_tag});
  const Split fit = to_split(fit_data);
  const Split ev = to_split(eval_data);

  Matrix pool(static_cast<Eigen::Index>(fit.items.size() * cfg.descriptors_per_item),
              static_cast<Eigen::Index>(cfg.dim));
  Eigen::Index row = 0;
  for (const auto& item : fit.items) {
    pool.middleRows(row, item.data.rows()) = item.data;
    row += item.data.rows();
  }
  EmConfig em;
  em.num_clusters = cfg.clusters;
  em.seed = cfg.seed;
  GmmModel gmm = em_fit(pool, em);
  std::string fv_name = "FV";
  if (cfg.train_epochs > 0) {
    TrainConfig tc;
    tc.epochs = cfg.train_epochs;
    tc.iterations_per_epoch = cfg.iterations_per_epoch;
    tc.seed = cfg.seed;
    gmm = train(fit.items, {}, gmm, std::nullopt, tc).gmm;
    fv_name = "SIAM-FV";
  }
  auto encode = [&](const Split& s) { return encode_items(s.items, gmm.params(), std::nullopt, PosteriorMode::kUnweighted); };

  struct Aggregator {
    std::string name;
    std::function<Matrix(const Split&)> apply;
  };
  const std::vector<Aggregator> aggregators{
      {fv_name, encode},
      {"SUM Pool", [](const Split& s) { return pooled(s, PoolMode::kSum); }},
      {"MAC", [](const Split& s) { return pooled(s, PoolMode::kMax); }},
  };

  CompareReport report;
  report.config = cfg;
  report.fit_dataset = fit_data.dataset_tag;
  report.eval_dataset = eval_data.dataset_tag;
  for (const auto& agg : aggregators) {
    const Matrix fit_vecs = agg.apply(fit);
    const Matrix eval_vecs = agg.apply(ev);
    const auto native = static_cast<std::size_t>(eval_vecs.cols());
    report.rows.push_back({agg.name, "none", native, {{leave_one_out_map(eval_vecs, ev.labels, ev.ids), ""}}});
    for (const char* reduction : {"PCA-w", "LDA-w"}) {
      CompareRow r{agg.name, reduction, native, {}};
      for (std::size_t m : cfg.output_dims) {
        CompareCell cell;
        if (m > native) {
          cell.note = "exceeds input dimension";
        } else {
          try {
            const ProjectionModel model = std::string(reduction) == "PCA-w"
                                              ? fit_pca_whiten(fit_vecs, m)
                                              : fit_lda_whiten(fit_vecs, fit.labels, m);
            cell.map = leave_one_out_map(project_batch(eval_vecs, model), ev.labels, ev.ids);
          } catch (const Error& e) {
            cell.note = e.what();
          }
        }
        r.cells.push_back(std::move(cell));
      }
      report.rows.push_back(std::move(r));
    }
  }
  return report;
}

std::string CompareReport::to_json() const {
  using json = nlohmann::json;
  json rows_json = json::array();
  for (const auto& r : rows) {
    json cells = json::array();
    for (std::size_t i = 0; i < r.cells.size(); ++i) {
      json c;
      c["dim"] = r.reduction == "none" ? r.native_dim : config.output_dims[i];
      c["map"] = r.cells[i].map ? json(*r.cells[i].map) : json(nullptr);
      if (!r.cells[i].note.empty()) c["note"] = r.cells[i].note;
      cells.push_back(std::move(c));
    }
    rows_json.push_back(json{{"aggregator", r.aggregator}, {"reduction", r.reduction}, {"cells", cells}});
  }
  json doc{{"fit_dataset", fit_dataset},
           {"eval_dataset", eval_dataset},
           {"seed", config.seed},
           {"dim", config.dim},
           {"clusters", config.clusters},
           {"train_epochs", config.train_epochs},
           {"output_dims", config.output_dims},
           {"rows", rows_json}};
  return doc.dump(2) + "\n";
}

std::string CompareReport::to_table() const {
  std::ostringstream os;
  os << "mAP (%) on " << eval_dataset << ", projections fitted on " << fit_dataset << "\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %-7s %10s", "method", "reduce", "full");
  os << line;
  for (std::size_t m : config.output_dims) {
    std::snprintf(line, sizeof line, " %6zu", m);
    os << line;
  }
  os << "\n";
  for (std::size_t i = 0; i < rows.size(); i += 3) {
    // rows come in triples: none, PCA-w, LDA-w
    const std::string full = cell_text(rows[i].cells.front()) + "@" + std::to_string(rows[i].native_dim);
    for (std::size_t k = 1; k <= 2 && i + k < rows.size(); ++k) {
      const CompareRow& r = rows[i + k];
      std::snprintf(line, sizeof line, "%-10s %-7s %10s", r.aggregator.c_str(), r.reduction.c_str(),
                    k == 1 ? full.c_str() : "");
      os << line;
      for (const auto& c : r.cells) {
        std::snprintf(line, sizeof line, " %6s", cell_text(c).c_str());
        os << line;
      }
      os << "\n";
    }
  }
  return os.str();
}

}  // namespace siamfv
