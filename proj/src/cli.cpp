#include "siamfv/cli.hpp"

#include "siamfv/error.hpp"
#include "siamfv/fisher.hpp"
#include "siamfv/gmm_em.hpp"
#include "siamfv/gradcheck.hpp"
#include "siamfv/io.hpp"
#include "siamfv/kernels.hpp"
#include "siamfv/projection.hpp"
#include "siamfv/retrieval.hpp"
#include "siamfv/siamese.hpp"
#include "siamfv/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>

namespace siamfv::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr double kGradcheckBound = 1e-6;
constexpr std::size_t kEmSampleCap = 200000;

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

PosteriorMode parse_mode(const std::string& s) {
  return s == "standard" ? PosteriorMode::kStandard : PosteriorMode::kUnweighted;
}

void check_file_id(const std::string& id) {
  if (id.empty() || id.front() == '.' || id.find_first_of("/\\") != std::string::npos) {
    throw Error("item id '" + id + "' cannot be used as a file name");
  }
}

bool all_raw(const io::TrainManifest& m) {
  std::set<bool> kinds;
  for (const auto* list : {&m.items, &m.eval_items}) {
    for (const auto& item : *list) kinds.insert(item.raw_patches);
  }
  if (kinds.size() > 1) throw Error("manifest mixes raw_patch_path and descriptor_path items");
  return *kinds.begin();
}

std::vector<TrainItem> load_items(const std::vector<io::ManifestItem>& list) {
  std::vector<TrainItem> out;
  out.reserve(list.size());
  for (const auto& item : list) {
    Matrix data = io::load_item(item);
    if (data.rows() < 1) throw Error("item " + item.id + ": empty input");
    if (!data.allFinite()) throw Error("item " + item.id + ": non-finite values");
    out.push_back({item.id, item.class_label, std::move(data)});
  }
  return out;
}

// A gallery's vectors, widened and brought back to unit length (float32
// storage alone cannot hold the 1e-8 unit-norm tolerance).
struct LoadedGallery {
  io::GalleryManifest manifest;
  Matrix vectors;
};

LoadedGallery load_gallery(const fs::path& path, bool renormalize) {
  LoadedGallery g{io::read_gallery_manifest(path), {}};
  if (g.manifest.items.empty()) throw Error("gallery has no items");
  for (std::size_t i = 0; i < g.manifest.items.size(); ++i) {
    const auto& e = g.manifest.items[i];
    const Matrix m = io::read_fvd1(e.path);
    if (m.rows() != 1) throw Error("gallery item " + e.id + ": expected a single vector");
    if (i == 0) g.vectors.resize(static_cast<Eigen::Index>(g.manifest.items.size()), m.cols());
    if (m.cols() != g.vectors.cols()) throw Error("gallery item " + e.id + ": length mismatch");
    Vector v = m.row(0).transpose();
    if (renormalize) {
      const double n = v.norm();
      if (!(n > 0.0)) throw Error("gallery item " + e.id + ": zero vector");
      v /= n;
    }
    g.vectors.row(static_cast<Eigen::Index>(i)) = v.transpose();
  }
  return g;
}

// Writes one FVD1 (T=1) per row and a gallery manifest next to them.
void write_vectors(const fs::path& dir, const Matrix& rows, io::GalleryManifest manifest) {
  for (std::size_t i = 0; i < manifest.items.size(); ++i) {
    auto& e = manifest.items[i];
    check_file_id(e.id);
    e.path = dir / "vectors" / (e.id + ".fvd");
    e.is_vector = true;
    io::write_fvd1(e.path, rows.row(static_cast<Eigen::Index>(i)));
  }
  io::write_gallery_manifest(dir / "gallery.json", manifest);
}

// Every item with at least one same-class partner queries the others.
std::vector<io::GalleryQueryEntry> class_queries(const std::vector<io::GalleryEntry>& items) {
  std::map<int, std::vector<std::string>> by_class;
  for (const auto& e : items) {
    if (e.class_label) by_class[*e.class_label].push_back(e.id);
  }
  std::vector<io::GalleryQueryEntry> out;
  for (const auto& e : items) {
    if (!e.class_label) continue;
    io::GalleryQueryEntry q{e.id, {}, {}};
    for (const auto& other : by_class[*e.class_label]) {
      if (other != e.id) q.relevant.push_back(other);
    }
    if (!q.relevant.empty()) out.push_back(std::move(q));
  }
  return out;
}

struct Common {
  int threads = 0;
  void attach(CLI::App* app) {
    app->add_option("--threads", threads, "Cap on worker threads (default: all cores)")->check(CLI::NonNegativeNumber);
  }
  void apply() const {
    if (threads > 0) omp_set_num_threads(threads);
  }
};

struct InitGmmArgs {
  std::string manifest, out;
  std::size_t clusters = 8;
  std::uint64_t seed = 0;
  std::size_t max_iters = 100;
  double tol = 1e-6;
  std::size_t sample = kEmSampleCap;
};

int run_init_gmm(const InitGmmArgs& a, std::ostream& out) {
  const io::TrainManifest m = io::read_train_manifest(a.manifest);
  const std::vector<TrainItem> items = load_items(m.items);
  Eigen::Index rows = 0;
  for (const auto& item : items) {
    if (item.data.cols() != items.front().data.cols()) throw Error("item " + item.id + ": dimension mismatch");
    rows += item.data.rows();
  }
  Matrix pool(rows, items.front().data.cols());
  rows = 0;
  for (const auto& item : items) {
    pool.middleRows(rows, item.data.rows()) = item.data;
    rows += item.data.rows();
  }
  if (a.sample > 0 && static_cast<std::size_t>(pool.rows()) > a.sample) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(pool.rows()));
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(a.seed ^ 0x9e3779b97f4a7c15ULL);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(a.sample);
    std::sort(idx.begin(), idx.end());
    Matrix sub(static_cast<Eigen::Index>(a.sample), pool.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) sub.row(static_cast<Eigen::Index>(i)) = pool.row(idx[i]);
    pool = std::move(sub);
  }
  EmConfig cfg;
  cfg.num_clusters = a.clusters;
  cfg.seed = a.seed;
  cfg.max_iters = a.max_iters;
  cfg.tol = a.tol;
  const EmResult fit = em_fit_traced(pool, cfg);
  io::write_fvg1(a.out, fit.model);
  out << "init-gmm: " << pool.rows() << " descriptors, " << fit.iterations << " iterations, log-likelihood "
      << fmt("%.6f", fit.log_likelihood.back()) << (fit.converged ? "" : " (not converged)") << "\n";
  return kOk;
}

struct TrainArgs {
  std::string manifest, gmm, out;
  int epochs = 30;
  double margin = 0.8, lr = 0.001, momentum = 0.5, weight_decay = 0.0005;
  std::uint64_t seed = 0;
  std::size_t iterations_per_epoch = 6000, remine_every = 2000, pairs_per_mine = 2000;
  std::string posterior = "unweighted";
};

int run_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const io::TrainManifest m = io::read_train_manifest(a.manifest);
  const GmmModel gmm = io::read_fvg1(a.gmm);
  const bool raw = all_raw(m);
  const std::vector<TrainItem> items = load_items(m.items);
  const std::vector<TrainItem> eval_items = load_items(m.eval_items);
  std::optional<BackboneModel> backbone;
  if (raw) backbone = BackboneModel::identity(gmm.dim());

  TrainConfig cfg;
  cfg.margin = a.margin;
  cfg.sgd = {a.lr, a.momentum, a.weight_decay};
  cfg.epochs = a.epochs;
  cfg.seed = a.seed;
  cfg.iterations_per_epoch = a.iterations_per_epoch;
  cfg.remine_every = a.remine_every;
  cfg.mining.pairs_per_mine = a.pairs_per_mine;
  cfg.mode = parse_mode(a.posterior);

  const fs::path dir(a.out);
  fs::create_directories(dir);
  std::string log;
  const TrainResult result = train(items, eval_items, gmm, backbone, cfg, [&](const EpochMetrics& e) {
    json line{{"epoch", e.epoch}, {"mean_loss", e.mean_loss}};
    if (e.map_eval) line["map_eval"] = *e.map_eval;
    log += line.dump() + "\n";
    err << "epoch " << e.epoch << " loss " << fmt("%.6f", e.mean_loss);
    if (e.map_eval) err << " mAP " << fmt("%.4f", *e.map_eval);
    if (e.skipped_steps > 0) err << " skipped " << e.skipped_steps;
    err << "\n";
  });
  io::write_text(dir / "metrics.jsonl", log);
  io::write_fvg1(dir / "gmm.fvg", result.gmm);
  if (result.backbone) io::write_fvb1(dir / "backbone.fvb", *result.backbone);
  out << "train: " << result.log.size() << " epochs, final loss " << fmt("%.6f", result.log.back().mean_loss)
      << "\n";
  return kOk;
}

struct EncodeArgs {
  std::string manifest, gmm, out, pool = "fv", backbone, split = "all", posterior = "unweighted";
};

int run_encode(const EncodeArgs& a, std::ostream& out) {
  const io::TrainManifest m = io::read_train_manifest(a.manifest);
  const bool raw = all_raw(m);
  std::optional<BackboneModel> backbone;
  if (!a.backbone.empty()) {
    if (!raw) throw Error("--backbone given but the manifest lists descriptors, not raw patches");
    backbone = io::read_fvb1(a.backbone);
  }
  std::vector<io::ManifestItem> list;
  if (a.split != "eval") list.insert(list.end(), m.items.begin(), m.items.end());
  if (a.split != "train") list.insert(list.end(), m.eval_items.begin(), m.eval_items.end());
  if (list.empty()) throw Error("no items in the selected split");
  const std::vector<TrainItem> items = load_items(list);

  std::vector<Matrix> sets;
  sets.reserve(items.size());
  for (const auto& item : items) {
    if (backbone) {
      if (static_cast<std::size_t>(item.data.cols()) != backbone->raw_dim()) {
        throw Error("item " + item.id + ": dimension mismatch with backbone");
      }
      sets.push_back(backbone_forward(item.data, *backbone).data());
    } else {
      sets.push_back(item.data);
    }
  }

  Matrix vectors;
  if (a.pool == "fv") {
    const GmmModel gmm = io::read_fvg1(a.gmm);
    for (const auto& s : sets) {
      if (static_cast<std::size_t>(s.cols()) != gmm.dim()) throw Error("descriptor dimension does not match the GMM");
    }
    vectors = kernels::encode_batch(sets, gmm.params(), parse_mode(a.posterior));
  } else {
    const PoolMode mode = a.pool == "sum" ? PoolMode::kSum : PoolMode::kMax;
    vectors.resize(static_cast<Eigen::Index>(sets.size()), sets.front().cols());
    for (std::size_t i = 0; i < sets.size(); ++i) {
      if (sets[i].cols() != vectors.cols()) throw Error("item " + items[i].id + ": dimension mismatch");
      try {
        vectors.row(static_cast<Eigen::Index>(i)) = baseline_pool(LocalDescriptorSet(sets[i]), mode).transpose();
      } catch (const Error& e) {
        throw Error("item " + items[i].id + ": " + e.what());
      }
    }
  }

  io::GalleryManifest g;
  for (const auto& item : items) g.items.push_back({item.id, {}, true, m.dataset_tag, item.class_label});
  g.queries = class_queries(g.items);
  write_vectors(a.out, vectors, std::move(g));
  out << "encode: " << items.size() << " vectors of length " << vectors.cols() << "\n";
  return kOk;
}

struct GradcheckArgs {
  std::size_t clusters = 4, dim = 8, count = 16;
  std::uint64_t seed = 0;
  double step = 1e-6;
  std::string posterior = "unweighted", out;
};

int run_gradcheck(const GradcheckArgs& a, std::ostream& out, std::ostream& err) {
  const GradCheckInstance inst =
      make_gradcheck_instance(a.clusters, a.dim, a.count, a.seed, parse_mode(a.posterior));
  const GradCheckReport r = finite_diff_check(inst, a.step);
  out << "family        max_rel_error\n";
  for (const auto& [family, e] : r.per_family_errors) {
    char line[80];
    std::snprintf(line, sizeof line, "%-12s  %.3e\n", family.c_str(), e);
    out << line;
  }
  out << "worst: " << r.worst_parameter << " (" << fmt("%.3e", r.max_rel_error) << ")\n";
  json doc{{"max_rel_error", r.max_rel_error},
           {"max_elementwise_rel_error", r.max_elementwise_rel_error},
           {"worst_parameter", r.worst_parameter},
           {"per_family_errors", r.per_family_errors},
           {"compared", r.compared},
           {"clusters", a.clusters},
           {"dim", a.dim},
           {"count", a.count},
           {"seed", a.seed},
           {"step", a.step}};
  out << doc.dump() << "\n";
  if (!a.out.empty()) io::write_text(a.out, doc.dump(2) + "\n");
  if (!(r.max_rel_error <= kGradcheckBound)) {
    err << "error: gradient check failed: max relative error " << fmt("%.3e", r.max_rel_error) << " at "
        << r.worst_parameter << "\n";
    return kDomainError;
  }
  return kOk;
}

struct ProjectArgs {
  std::string fit, apply, vectors, out;
  std::size_t dim = 512;
  double ridge = LdaOptions{}.ridge;
};

fs::path meta_path(const fs::path& model) { return fs::path(model.string() + ".meta.json"); }

int run_project(const ProjectArgs& a, std::ostream& out, std::ostream& err) {
  const bool fitting = !a.fit.empty();
  LoadedGallery g = load_gallery(a.vectors, false);
  std::set<std::string> tags;
  for (const auto& e : g.manifest.items) tags.insert(e.dataset_tag);
  if (fitting) {
    ProjectionModel model;
    if (a.fit == "pca") {
      model = fit_pca_whiten(g.vectors, a.dim);
    } else {
      std::vector<int> labels;
      for (const auto& e : g.manifest.items) {
        if (!e.class_label) throw Error("LDA needs class_label on every item; missing for " + e.id);
        labels.push_back(*e.class_label);
      }
      model = fit_lda_whiten(g.vectors, labels, a.dim, LdaOptions{a.ridge});
    }
    io::write_fvp1(a.out, model);
    json meta{{"method", a.fit},
              {"input_dim", model.input_dim()},
              {"output_dim", model.output_dim()},
              {"fit_dataset_tags", std::vector<std::string>(tags.begin(), tags.end())}};
    io::write_text(meta_path(a.out), meta.dump(2) + "\n");
    out << "project: fitted " << a.fit << " " << model.input_dim() << " -> " << model.output_dim() << "\n";
    return kOk;
  }
  const ProjectionModel model = io::read_fvp1(a.apply);
  if (fs::exists(meta_path(a.apply))) {
    std::ifstream in(meta_path(a.apply));
    json meta;
    try {
      meta = json::parse(in);
    } catch (const json::exception& e) {
      throw Error("malformed projection metadata: " + std::string(e.what()));
    }
    require_disjoint_datasets(meta.value("fit_dataset_tags", std::vector<std::string>{}),
                              std::vector<std::string>(tags.begin(), tags.end()));
  } else {
    err << "project: no fit metadata next to " << a.apply << "; dataset separation not checked\n";
  }
  if (static_cast<std::size_t>(g.vectors.cols()) != model.input_dim()) {
    throw Error("vector length " + std::to_string(g.vectors.cols()) + " does not match projection input " +
                std::to_string(model.input_dim()));
  }
  Matrix projected(g.vectors.rows(), static_cast<Eigen::Index>(model.output_dim()));
  for (Eigen::Index i = 0; i < g.vectors.rows(); ++i) {
    try {
      projected.row(i) = project(g.vectors.row(i).transpose(), model).transpose();
    } catch (const Error& e) {
      throw Error("item " + g.manifest.items[static_cast<std::size_t>(i)].id + ": " + e.what());
    }
  }
  write_vectors(a.out, projected, std::move(g.manifest));
  out << "project: applied to " << projected.rows() << " vectors\n";
  return kOk;
}

int run_eval(const std::string& gallery_path, const std::string& report_path, std::ostream& out) {
  LoadedGallery g = load_gallery(gallery_path, true);
  if (g.manifest.queries.empty()) throw Error("gallery has no queries");
  std::vector<GalleryItem> items;
  for (std::size_t i = 0; i < g.manifest.items.size(); ++i) {
    const auto& e = g.manifest.items[i];
    items.push_back({e.id, g.vectors.row(static_cast<Eigen::Index>(i)).transpose(), e.dataset_tag});
  }
  std::vector<GalleryQuery> queries;
  for (const auto& q : g.manifest.queries) {
    queries.push_back({q.id, {q.relevant.begin(), q.relevant.end()}, {q.ignore.begin(), q.ignore.end()}});
  }
  const GalleryIndex index(std::move(items), std::move(queries));
  const EvalReport report = evaluate(index);
  json per = json::array();
  for (const auto& q : report.queries) per.push_back(json{{"id", q.id}, {"average_precision", q.average_precision}});
  json doc{{"mean_average_precision", report.mean_average_precision}, {"queries", per}};
  io::write_text(report_path, doc.dump(2) + "\n");
  out << "eval: mAP " << fmt("%.4f", report.mean_average_precision) << " over " << report.queries.size()
      << " queries\n";
  return kOk;
}

struct SynthArgs {
  SynthConfig cfg;
  std::string out;
};

int run_synth(const SynthArgs& a, std::ostream& out) {
  const SynthDataset data = generate_synth(a.cfg);
  write_synth(a.out, data);
  out << "synth: " << data.items.size() << " items written to " << a.out << "\n";
  return kOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fisher-vector aggregation with Siamese training"};
  app.name("siamfv");
  app.require_subcommand(1);
  Common common;

  InitGmmArgs init;
  auto* c_init = app.add_subcommand("init-gmm", "Fit the initial GMM by EM");
  c_init->add_option("--manifest", init.manifest, "Training manifest")->required()->check(CLI::ExistingFile);
  c_init->add_option("--clusters", init.clusters, "Number of clusters")->check(CLI::PositiveNumber);
  c_init->add_option("--out", init.out, "Output FVG1 model")->required();
  c_init->add_option("--seed", init.seed, "Seed");
  c_init->add_option("--max-iters", init.max_iters, "EM iteration cap")->check(CLI::PositiveNumber);
  c_init->add_option("--tol", init.tol, "Relative log-likelihood tolerance")->check(CLI::PositiveNumber);
  c_init->add_option("--sample", init.sample, "Subsample size for EM (0 = all)");
  common.attach(c_init);

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Siamese training of the FV layer (and backbone)");
  c_train->add_option("--manifest", tr.manifest, "Training manifest")->required()->check(CLI::ExistingFile);
  c_train->add_option("--gmm", tr.gmm, "Initial FVG1 model")->required()->check(CLI::ExistingFile);
  c_train->add_option("--epochs", tr.epochs, "Epochs")->check(CLI::PositiveNumber);
  c_train->add_option("--margin", tr.margin, "Contrastive margin")->check(CLI::PositiveNumber);
  c_train->add_option("--lr", tr.lr, "Learning rate")->check(CLI::NonNegativeNumber);
  c_train->add_option("--momentum", tr.momentum, "Momentum")->check(CLI::NonNegativeNumber);
  c_train->add_option("--weight-decay", tr.weight_decay, "Weight decay")->check(CLI::NonNegativeNumber);
  c_train->add_option("--seed", tr.seed, "Seed");
  c_train->add_option("--out", tr.out, "Output directory")->required();
  c_train->add_option("--iterations-per-epoch", tr.iterations_per_epoch, "Iterations per epoch")
      ->check(CLI::PositiveNumber);
  c_train->add_option("--remine-every", tr.remine_every, "Iterations between mining rounds")
      ->check(CLI::PositiveNumber);
  c_train->add_option("--pairs-per-mine", tr.pairs_per_mine, "Matching pairs sampled per mining round")
      ->check(CLI::PositiveNumber);
  c_train->add_option("--posterior", tr.posterior, "Soft-assignment form")
      ->check(CLI::IsMember({"unweighted", "standard"}));
  common.attach(c_train);

  EncodeArgs enc;
  auto* c_enc = app.add_subcommand("encode", "Encode items as global vectors");
  c_enc->add_option("--manifest", enc.manifest, "Training manifest")->required()->check(CLI::ExistingFile);
  c_enc->add_option("--gmm", enc.gmm, "FVG1 model (needed for --pool fv)")->check(CLI::ExistingFile);
  c_enc->add_option("--out", enc.out, "Output directory")->required();
  c_enc->add_option("--pool", enc.pool, "Aggregator")->check(CLI::IsMember({"fv", "sum", "max"}));
  c_enc->add_option("--backbone", enc.backbone, "FVB1 backbone for raw-patch items")->check(CLI::ExistingFile);
  c_enc->add_option("--split", enc.split, "Which items")->check(CLI::IsMember({"all", "train", "eval"}));
  c_enc->add_option("--posterior", enc.posterior, "Soft-assignment form")
      ->check(CLI::IsMember({"unweighted", "standard"}));
  common.attach(c_enc);

  GradcheckArgs gc;
  auto* c_gc = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  c_gc->add_option("--clusters", gc.clusters, "Clusters")->required()->check(CLI::PositiveNumber);
  c_gc->add_option("--dim", gc.dim, "Descriptor dimension")->required()->check(CLI::PositiveNumber);
  c_gc->add_option("--count", gc.count, "Descriptors per set")->required()->check(CLI::PositiveNumber);
  c_gc->add_option("--seed", gc.seed, "Seed")->required();
  c_gc->add_option("--step", gc.step, "Relative step h");
  c_gc->add_option("--posterior", gc.posterior, "Soft-assignment form")
      ->check(CLI::IsMember({"unweighted", "standard"}));
  c_gc->add_option("--out", gc.out, "Also write the JSON report here");
  common.attach(c_gc);

  ProjectArgs pj;
  auto* c_pj = app.add_subcommand("project", "Fit or apply a PCA/LDA whitening projection");
  auto* o_fit = c_pj->add_option("--fit", pj.fit, "Fit a model")->check(CLI::IsMember({"pca", "lda"}));
  auto* o_apply = c_pj->add_option("--apply", pj.apply, "Apply an FVP1 model")->check(CLI::ExistingFile);
  o_fit->excludes(o_apply);
  c_pj->add_option("--vectors", pj.vectors, "Gallery manifest of vectors")->required()->check(CLI::ExistingFile);
  auto* o_dim = c_pj->add_option("--dim,--reduce-dim", pj.dim, "Output dimension")->check(CLI::IsMember({128, 256, 512}));
  o_dim->needs(o_fit);
  o_dim->excludes(o_apply);
  c_pj->add_option("--ridge", pj.ridge, "LDA within-class ridge (relative)")->check(CLI::NonNegativeNumber);
  c_pj->add_option("--out", pj.out, "FVP1 (fit) or directory (apply)")->required();
  common.attach(c_pj);

  std::string gallery, report;
  auto* c_eval = app.add_subcommand("eval", "Rank a gallery and report mAP");
  c_eval->add_option("--gallery", gallery, "Gallery manifest")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--out", report, "Report JSON")->required();
  common.attach(c_eval);

  SynthArgs sy;
  auto* c_sy = app.add_subcommand("synth", "Generate a labelled synthetic dataset");
  c_sy->add_option("--classes", sy.cfg.classes, "Classes")->required()->check(CLI::Range(2, 1 << 20));
  c_sy->add_option("--items-per-class", sy.cfg.items_per_class, "Items per class")
      ->required()
      ->check(CLI::PositiveNumber);
  c_sy->add_option("--descriptors-per-item", sy.cfg.descriptors_per_item, "Descriptors per item")
      ->required()
      ->check(CLI::PositiveNumber);
  c_sy->add_option("--dim", sy.cfg.dim, "Descriptor dimension")->required()->check(CLI::Range(2, 1 << 16));
  c_sy->add_option("--seed", sy.cfg.seed, "Seed")->required();
  c_sy->add_option("--eval-fraction", sy.cfg.eval_fraction, "Share of classes held out")
      ->check(CLI::Range(0.0, 0.99));
  c_sy->add_option("--dataset-tag", sy.cfg.dataset_tag, "Dataset tag (default synth-<seed>)");
  c_sy->add_option("--out", sy.out, "Output directory")->required();
  common.attach(c_sy);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
    if (c_pj->parsed()) {
      if (pj.fit.empty() == pj.apply.empty()) throw CLI::ValidationError("project", "exactly one of --fit, --apply");
    }
    if (c_enc->parsed() && enc.pool == "fv" && enc.gmm.empty()) throw CLI::RequiredError("--gmm");
  } catch (const CLI::CallForHelp& e) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return kUsageError;
  }

  common.apply();
  try {
    if (c_init->parsed()) return run_init_gmm(init, out);
    if (c_train->parsed()) return run_train(tr, out, err);
    if (c_enc->parsed()) return run_encode(enc, out);
    if (c_gc->parsed()) return run_gradcheck(gc, out, err);
    if (c_pj->parsed()) return run_project(pj, out, err);
    if (c_eval->parsed()) return run_eval(gallery, report, out);
    if (c_sy->parsed()) return run_synth(sy, out);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "error: " << msg << "\n";
    return kDomainError;
  }
  return kUsageError;
}

int main_entry(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace siamfv::cli
