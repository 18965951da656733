#include "siamfv/io.hpp"

#include "siamfv/error.hpp"

#include <json.hpp>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace siamfv::io {
namespace {

using json = nlohmann::json;

class Writer {
 public:
  explicit Writer(const fs::path& path) : path_(path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw Error("cannot open " + path.string() + " for writing");
  }

  void magic(const char (&tag)[5]) { out_.write(tag, 4); }
  void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.put(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.put(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void finish() {
    out_.flush();
    if (!out_) throw Error("write failed for " + path_.string());
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const fs::path& path) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    bytes_ = buf.str();
  }

  void magic(const char (&tag)[5]) {
    need(4);
    if (std::memcmp(bytes_.data() + pos_, tag, 4) != 0) {
      throw Error("bad magic in " + path_.string() + " (expected " + tag + ")");
    }
    pos_ += 4;
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  void expect_end() {
    if (pos_ != bytes_.size()) throw Error("trailing bytes in " + path_.string());
  }
  // Guards size fields before allocating.
  void expect_remaining(std::uint64_t count) {
    if (bytes_.size() - pos_ < count) throw Error("truncated file " + path_.string());
  }

 private:
  void need(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw Error("truncated file " + path_.string());
  }

  fs::path path_;
  std::string bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t to_u32(Eigen::Index n, const char* what) {
  if (n < 0 || static_cast<std::uint64_t>(n) > 0xffffffffULL) throw std::invalid_argument(std::string(what) + " too large");
  return static_cast<std::uint32_t>(n);
}

void put_f64(Writer& w, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) w.f64(m.data()[i]);
}
void put_f64(Writer& w, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) w.f64(v[i]);
}
Matrix get_f64(Reader& r, std::uint32_t rows, std::uint32_t cols) {
  r.expect_remaining(8ULL * rows * cols);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.f64();
  return m;
}
Vector get_f64(Reader& r, std::uint32_t n) {
  r.expect_remaining(8ULL * n);
  Vector v(n);
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = r.f64();
  return v;
}

json parse_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error("malformed JSON in " + path.string() + ": " + e.what());
  }
}

template <typename T>
T field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) throw Error(where + ": missing field '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(where + ": field '" + key + "' has the wrong type");
  }
}

fs::path resolve(const fs::path& base, const std::string& rel, const std::string& where) {
  const fs::path p = fs::path(rel).is_absolute() ? fs::path(rel) : base / rel;
  if (!fs::exists(p)) throw Error(where + ": missing file " + p.string());
  return p;
}

std::string relative_to(const fs::path& p, const fs::path& base) {
  return fs::relative(p, base.empty() ? fs::path(".") : base).generic_string();
}

std::vector<ManifestItem> parse_items(const json& doc, const char* key, const fs::path& base,
                                      std::set<std::string>& seen) {
  std::vector<ManifestItem> out;
  if (!doc.contains(key)) return out;
  if (!doc.at(key).is_array()) throw Error(std::string("manifest: '") + key + "' must be an array");
  for (const json& entry : doc.at(key)) {
    ManifestItem item;
    item.id = field<std::string>(entry, "id", std::string("manifest ") + key);
    const std::string where = "manifest item '" + item.id + "'";
    if (!seen.insert(item.id).second) throw Error("manifest: duplicate id '" + item.id + "'");
    item.class_label = field<int>(entry, "class_label", where);
    const bool has_desc = entry.contains("descriptor_path");
    const bool has_raw = entry.contains("raw_patch_path");
    if (has_desc == has_raw) throw Error(where + ": exactly one of descriptor_path, raw_patch_path required");
    item.raw_patches = has_raw;
    item.path = resolve(base, field<std::string>(entry, has_raw ? "raw_patch_path" : "descriptor_path", where), where);
    out.push_back(std::move(item));
  }
  return out;
}

json items_json(const std::vector<ManifestItem>& items, const fs::path& base) {
  json arr = json::array();
  for (const auto& item : items) {
    json e;
    e["id"] = item.id;
    e["class_label"] = item.class_label;
    e[item.raw_patches ? "raw_patch_path" : "descriptor_path"] = relative_to(item.path, base);
    arr.push_back(std::move(e));
  }
  return arr;
}

}  // namespace

Matrix read_fvd1(const fs::path& path) {
  Reader r(path);
  r.magic("FVD1");
  const std::uint32_t t = r.u32();
  const std::uint32_t d = r.u32();
  if (r.u32() != 0) throw Error("reserved field not zero in " + path.string());
  r.expect_remaining(4ULL * t * d);
  Matrix m(t, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<double>(r.f32());
  r.expect_end();
  return m;
}

void write_fvd1(const fs::path& path, const Matrix& data) {
  Writer w(path);
  w.magic("FVD1");
  w.u32(to_u32(data.rows(), "descriptor count"));
  w.u32(to_u32(data.cols(), "descriptor dimension"));
  w.u32(0);
  for (Eigen::Index i = 0; i < data.size(); ++i) w.f32(static_cast<float>(data.data()[i]));
  w.finish();
}

GmmModel read_fvg1(const fs::path& path) {
  Reader r(path);
  r.magic("FVG1");
  const std::uint32_t c = r.u32();
  const std::uint32_t d = r.u32();
  GmmParams p;
  p.weights = get_f64(r, c);
  p.means = get_f64(r, c, d);
  p.stddevs = get_f64(r, c, d);
  r.expect_end();
  try {
    return GmmModel(std::move(p));
  } catch (const std::invalid_argument& e) {
    throw Error("invalid mixture in " + path.string() + ": " + e.what());
  }
}

void write_fvg1(const fs::path& path, const GmmModel& gmm) {
  Writer w(path);
  w.magic("FVG1");
  w.u32(static_cast<std::uint32_t>(gmm.num_clusters()));
  w.u32(static_cast<std::uint32_t>(gmm.dim()));
  put_f64(w, gmm.weights());
  put_f64(w, gmm.means());
  put_f64(w, gmm.stddevs());
  w.finish();
}

ProjectionModel read_fvp1(const fs::path& path) {
  Reader r(path);
  r.magic("FVP1");
  const std::uint8_t method = r.u8();
  if (method > 1) throw Error("unknown projection method in " + path.string());
  const std::uint32_t big = r.u32();
  const std::uint32_t m = r.u32();
  ProjectionModel model;
  model.method = static_cast<ProjectionMethod>(method);
  model.mean = get_f64(r, big);
  r.expect_remaining(8ULL * big * m);
  model.basis.resize(big, m);
  for (std::uint32_t col = 0; col < m; ++col) {
    for (std::uint32_t row = 0; row < big; ++row) model.basis(row, col) = r.f64();
  }
  model.scales = get_f64(r, m);
  r.expect_end();
  if (m > big || !(model.scales.array() > 0.0).all()) throw Error("invalid projection model in " + path.string());
  return model;
}

void write_fvp1(const fs::path& path, const ProjectionModel& model) {
  Writer w(path);
  w.magic("FVP1");
  w.u8(static_cast<std::uint8_t>(model.method));
  w.u32(to_u32(model.basis.rows(), "projection input"));
  w.u32(to_u32(model.basis.cols(), "projection output"));
  put_f64(w, model.mean);
  for (Eigen::Index col = 0; col < model.basis.cols(); ++col) {
    for (Eigen::Index row = 0; row < model.basis.rows(); ++row) w.f64(model.basis(row, col));
  }
  put_f64(w, model.scales);
  w.finish();
}

BackboneModel read_fvb1(const fs::path& path) {
  Reader r(path);
  r.magic("FVB1");
  const std::uint32_t raw = r.u32();
  const std::uint32_t d = r.u32();
  BackboneModel b;
  b.weights = get_f64(r, raw, d);
  b.bias = get_f64(r, d);
  r.expect_end();
  if (!b.weights.allFinite() || !b.bias.allFinite()) throw Error("non-finite backbone in " + path.string());
  return b;
}

void write_fvb1(const fs::path& path, const BackboneModel& backbone) {
  Writer w(path);
  w.magic("FVB1");
  w.u32(to_u32(backbone.weights.rows(), "backbone input"));
  w.u32(to_u32(backbone.weights.cols(), "backbone output"));
  put_f64(w, backbone.weights);
  put_f64(w, backbone.bias);
  w.finish();
}

TrainManifest read_train_manifest(const fs::path& path) {
  const json doc = parse_json(path);
  if (!doc.is_object()) throw Error("manifest: top level must be an object");
  const fs::path base = path.parent_path();
  TrainManifest m;
  m.dataset_tag = doc.contains("dataset_tag") ? field<std::string>(doc, "dataset_tag", "manifest") : "";
  std::set<std::string> seen;
  m.items = parse_items(doc, "items", base, seen);
  m.eval_items = parse_items(doc, "eval_items", base, seen);
  if (m.items.empty()) throw Error("manifest: no items");
  return m;
}

void write_train_manifest(const fs::path& path, const TrainManifest& manifest) {
  const fs::path base = path.parent_path();
  json doc;
  doc["dataset_tag"] = manifest.dataset_tag;
  doc["items"] = items_json(manifest.items, base);
  doc["eval_items"] = items_json(manifest.eval_items, base);
  write_text(path, doc.dump(2) + "\n");
}

GalleryManifest read_gallery_manifest(const fs::path& path) {
  const json doc = parse_json(path);
  if (!doc.is_object() || !doc.contains("items") || !doc.at("items").is_array()) {
    throw Error("gallery: 'items' array required");
  }
  const fs::path base = path.parent_path();
  GalleryManifest g;
  for (const json& entry : doc.at("items")) {
    GalleryEntry e;
    e.id = field<std::string>(entry, "id", "gallery item");
    const std::string where = "gallery item '" + e.id + "'";
    const bool has_vec = entry.contains("vector_path");
    const bool has_desc = entry.contains("descriptor_path");
    if (has_vec == has_desc) throw Error(where + ": exactly one of vector_path, descriptor_path required");
    e.is_vector = has_vec;
    e.path = resolve(base, field<std::string>(entry, has_vec ? "vector_path" : "descriptor_path", where), where);
    e.dataset_tag = entry.contains("dataset_tag") ? field<std::string>(entry, "dataset_tag", where) : "";
    if (entry.contains("class_label")) e.class_label = field<int>(entry, "class_label", where);
    g.items.push_back(std::move(e));
  }
  if (doc.contains("queries")) {
    if (!doc.at("queries").is_array()) throw Error("gallery: 'queries' must be an array");
    for (const json& entry : doc.at("queries")) {
      GalleryQueryEntry q;
      q.id = field<std::string>(entry, "id", "gallery query");
      const std::string where = "gallery query '" + q.id + "'";
      q.relevant = field<std::vector<std::string>>(entry, "relevant", where);
      if (entry.contains("ignore")) q.ignore = field<std::vector<std::string>>(entry, "ignore", where);
      g.queries.push_back(std::move(q));
    }
  }
  return g;
}

void write_gallery_manifest(const fs::path& path, const GalleryManifest& manifest) {
  const fs::path base = path.parent_path();
  json doc;
  json items = json::array();
  for (const auto& e : manifest.items) {
    json j;
    j["id"] = e.id;
    j[e.is_vector ? "vector_path" : "descriptor_path"] = relative_to(e.path, base);
    j["dataset_tag"] = e.dataset_tag;
    if (e.class_label) j["class_label"] = *e.class_label;
    items.push_back(std::move(j));
  }
  json queries = json::array();
  for (const auto& q : manifest.queries) {
    queries.push_back(json{{"id", q.id}, {"relevant", q.relevant}, {"ignore", q.ignore}});
  }
  doc["items"] = std::move(items);
  doc["queries"] = std::move(queries);
  write_text(path, doc.dump(2) + "\n");
}

Matrix load_item(const ManifestItem& item) { return read_fvd1(item.path); }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace siamfv::io
