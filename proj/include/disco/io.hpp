#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "disco/curriculum.hpp"
#include "disco/error.hpp"
#include "disco/metrics.hpp"
#include "disco/records.hpp"
#include "disco/rewards.hpp"
#include "disco/toy_policy.hpp"

namespace disco::io {

using nlohmann::json;

inline constexpr const char* kFormatVersion = "disco/1";
inline constexpr double kNormTolerance = 1e-6;

struct DatasetHeader {
  std::string format_version = kFormatVersion;
  int embedding_dim = 0;
  double det_threshold = 0.7;
  std::string producer;
};

struct Dataset {
  DatasetHeader header;
  std::vector<GroupRecord> groups;

  std::vector<ImageRecord> images() const {
    std::vector<ImageRecord> out;
    for (const auto& g : groups) out.insert(out.end(), g.images.begin(), g.images.end());
    return out;
  }
};

/// Shortest decimal that round-trips to the same double.
inline std::string format_double(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

namespace detail {

inline void require_keys(const json& obj, std::size_t line, std::initializer_list<const char*> allowed,
                         const char* what) {
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw SchemaError(line, std::string("unknown key '") + key + "' in " + what);
  }
}

template <class T>
T get_field(const json& obj, const char* key, std::size_t line) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(line, std::string("missing field '") + key + "'");
  try {
    if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw SchemaError(line, std::string("field '") + key + "' must be a string");
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) throw SchemaError(line, std::string("field '") + key + "' must be an integer");
    } else {
      if (!it->is_number()) throw SchemaError(line, std::string("field '") + key + "' must be a number");
    }
    return it->get<T>();
  } catch (const json::exception& e) {
    throw SchemaError(line, std::string("field '") + key + "': " + e.what());
  }
}

inline json parse_line(const std::string& text, std::size_t line) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(line, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw SchemaError(line, "expected a JSON object");
  return j;
}

inline DatasetHeader parse_header(const json& j) {
  require_keys(j, 1, {"format_version", "embedding_dim", "det_threshold", "producer"}, "header");
  DatasetHeader h;
  h.format_version = get_field<std::string>(j, "format_version", 1);
  if (h.format_version != kFormatVersion)
    throw SchemaError(1, "unsupported format_version '" + h.format_version + "'");
  h.embedding_dim = get_field<int>(j, "embedding_dim", 1);
  if (h.embedding_dim < 2) throw SchemaError(1, "embedding_dim must be >= 2");
  h.det_threshold = get_field<double>(j, "det_threshold", 1);
  h.producer = j.contains("producer") ? get_field<std::string>(j, "producer", 1) : std::string{};
  return h;
}

inline FaceRecord parse_face(const json& f, const DatasetHeader& h, std::size_t line) {
  if (!f.is_object()) throw SchemaError(line, "face entries must be objects");
  require_keys(f, line, {"embedding", "confidence", "bbox"}, "face");
  const auto emb = f.find("embedding");
  if (emb == f.end() || !emb->is_array()) throw SchemaError(line, "face.embedding must be an array");
  if (emb->size() != static_cast<std::size_t>(h.embedding_dim))
    throw SchemaError(line, "embedding has dimension " + std::to_string(emb->size()) + ", header says " +
                                std::to_string(h.embedding_dim));
  std::vector<double> v;
  v.reserve(emb->size());
  for (const auto& x : *emb) {
    if (!x.is_number()) throw SchemaError(line, "embedding entries must be numbers");
    v.push_back(x.get<double>());
  }
  const double n = l2_norm(v);
  if (!(std::abs(n - 1.0) <= kNormTolerance)) throw NormError(line, n);
  const double conf = get_field<double>(f, "confidence", line);
  if (!(conf >= 0.0 && conf <= 1.0)) throw SchemaError(line, "confidence must lie in [0,1]");
  if (conf < h.det_threshold) throw SchemaError(line, "confidence " + format_double(conf) + " below det_threshold");
  FaceRecord face{normalize(v), conf, std::nullopt};
  if (const auto b = f.find("bbox"); b != f.end() && !b->is_null()) {
    if (!b->is_array() || b->size() != 4) throw SchemaError(line, "bbox must be [x0,y0,x1,y1]");
    for (const auto& x : *b)
      if (!x.is_number()) throw SchemaError(line, "bbox entries must be numbers");
    BoundingBox box{(*b)[0].get<double>(), (*b)[1].get<double>(), (*b)[2].get<double>(), (*b)[3].get<double>()};
    if (!box.valid()) throw SchemaError(line, "bbox requires x0<x1 and y0<y1");
    face.bbox = box;
  }
  return face;
}

inline ImageRecord parse_image(const json& j, const DatasetHeader& h, std::size_t line) {
  require_keys(j, line, {"image_id", "prompt_id", "target_count", "tag", "quality_raw", "faces"}, "image record");
  ImageRecord img;
  img.image_id = get_field<std::string>(j, "image_id", line);
  img.prompt_id = get_field<std::string>(j, "prompt_id", line);
  img.target_count = get_field<int>(j, "target_count", line);
  if (img.target_count < 1) throw SchemaError(line, "target_count must be >= 1");
  if (const auto t = j.find("tag"); t != j.end() && !t->is_null()) img.tag = get_field<std::string>(j, "tag", line);
  if (const auto q = j.find("quality_raw"); q != j.end() && !q->is_null())
    img.quality_raw = get_field<double>(j, "quality_raw", line);
  const auto faces = j.find("faces");
  if (faces == j.end() || !faces->is_array()) throw SchemaError(line, "faces must be an array");
  for (const auto& f : *faces) img.faces.push_back(parse_face(f, h, line));
  return img;
}

}  // namespace detail

/// Streams a disco/1 JSONL dataset. Images are grouped by prompt_id in order of
/// first appearance. Blank lines are skipped but still counted.
inline Dataset read_dataset(std::istream& in) {
  Dataset ds;
  std::string text;
  std::size_t line = 0;
  bool have_header = false;
  std::map<std::string, std::size_t> index;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (!have_header) {
      if (line != 1 || text.empty()) throw SchemaError(line, "first line must be the dataset header");
      ds.header = detail::parse_header(detail::parse_line(text, line));
      have_header = true;
      continue;
    }
    if (text.find_first_not_of(" \t") == std::string::npos) continue;
    auto img = detail::parse_image(detail::parse_line(text, line), ds.header, line);
    auto [it, fresh] = index.try_emplace(img.prompt_id, ds.groups.size());
    if (fresh) {
      ds.groups.push_back(GroupRecord{img.prompt_id, {}});
    } else if (ds.groups[it->second].images.front().target_count != img.target_count) {
      throw GroupInconsistency(img.prompt_id);
    }
    ds.groups[it->second].images.push_back(std::move(img));
  }
  if (!have_header) throw SchemaError(1, "empty file: missing dataset header");
  return ds;
}

inline Dataset read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError(0, "cannot open '" + path + "'");
  return read_dataset(in);
}

inline std::vector<GroupRecord> read_groups(const std::string& path) { return read_dataset(path).groups; }

inline json header_json(const DatasetHeader& h) {
  return json{{"format_version", h.format_version},
              {"embedding_dim", h.embedding_dim},
              {"det_threshold", h.det_threshold},
              {"producer", h.producer}};
}

inline json image_json(const ImageRecord& img) {
  json faces = json::array();
  for (const auto& f : img.faces) {
    json face{{"embedding", std::vector<double>(f.embedding.values().begin(), f.embedding.values().end())},
              {"confidence", f.confidence}};
    if (f.bbox) face["bbox"] = {f.bbox->x0, f.bbox->y0, f.bbox->x1, f.bbox->y1};
    faces.push_back(std::move(face));
  }
  json j{{"image_id", img.image_id}, {"prompt_id", img.prompt_id}, {"target_count", img.target_count}};
  if (img.tag) j["tag"] = *img.tag;
  if (img.quality_raw) j["quality_raw"] = *img.quality_raw;
  j["faces"] = std::move(faces);
  return j;
}

inline void write_dataset(std::ostream& out, const DatasetHeader& h, std::span<const ImageRecord> images) {
  out << header_json(h).dump() << '\n';
  for (const auto& img : images) out << image_json(img).dump() << '\n';
}

inline void write_dataset(std::ostream& out, const Dataset& ds) {
  const auto images = ds.images();
  write_dataset(out, ds.header, images);
}

// ---------------------------------------------------------------------------
// Reports

inline json breakdown_json(const RewardBreakdown& b, const std::string& prompt_id) {
  return json{{"image_id", b.image_id}, {"prompt_id", prompt_id}, {"intra", b.intra},   {"group", b.group},
              {"count", b.count},       {"quality", b.quality},   {"total", b.total},   {"delta_i", b.delta_i}};
}

inline json metric_values_json(const MetricValues& v) {
  return json{{"count_accuracy_pct", v.count_accuracy_pct},
              {"ufa_pct", v.ufa_pct},
              {"gis_pct", v.gis_pct},
              {"n_images", v.n_images},
              {"n_count_correct", v.n_count_correct},
              {"n_duplicate_free", v.n_duplicate_free},
              {"n_clusters", v.n_clusters},
              {"total_requested", v.total_requested}};
}

inline json report_json(const MetricsReport& r, const MetricsConfig& cfg) {
  json j = metric_values_json(r.overall);
  j["config"] = json{{"dup_threshold", cfg.dup_threshold}, {"det_threshold", cfg.det_threshold}};
  json per_count = json::object();
  for (const auto& [n, v] : r.per_count) per_count[std::to_string(n)] = metric_values_json(v);
  j["per_count"] = std::move(per_count);
  if (r.per_tag) {
    json per_tag = json::object();
    for (const auto& [tag, v] : *r.per_tag) per_tag[tag] = metric_values_json(v);
    j["per_tag"] = std::move(per_tag);
  }
  return j;
}

inline constexpr const char* kReportCsvHeader =
    "split,key,n_images,count_accuracy_pct,ufa_pct,gis_pct,n_count_correct,n_duplicate_free,n_clusters,total_requested";

inline void write_report_csv(std::ostream& out, const MetricsReport& r) {
  const auto row = [&](const std::string& split, const std::string& key, const MetricValues& v) {
    out << split << ',' << key << ',' << v.n_images << ',' << format_double(v.count_accuracy_pct) << ','
        << format_double(v.ufa_pct) << ',' << format_double(v.gis_pct) << ',' << v.n_count_correct << ','
        << v.n_duplicate_free << ',' << v.n_clusters << ',' << v.total_requested << '\n';
  };
  out << kReportCsvHeader << '\n';
  row("overall", "all", r.overall);
  for (const auto& [n, v] : r.per_count) row("count", std::to_string(n), v);
  if (r.per_tag)
    for (const auto& [tag, v] : *r.per_tag) row("tag", tag, v);
}

/// step, lambda_t, then p_t(n) for every n in the support.
inline void write_curriculum_csv(std::ostream& out, const CurriculumConfig& cfg, std::int64_t last_step,
                                 std::int64_t stride) {
  if (stride < 1) throw InvalidArgument("curriculum grid stride must be >= 1");
  out << "step,lambda_t";
  for (int n = cfg.n_min; n <= cfg.n_max; ++n) out << ",p_" << n;
  out << '\n';
  for (std::int64_t t = 0; t <= last_step; t += stride) {
    const auto d = distribution(t, cfg);
    out << t << ',' << format_double(annealing_weight(t, cfg));
    for (double p : d.p) out << ',' << format_double(p);
    out << '\n';
  }
}

inline constexpr const char* kTrainCsvHeader = "step,n_target,intra,group,count,quality,total,objective,kl";

inline void write_train_csv(std::ostream& out, std::span<const toy::TrainLogRow> rows) {
  out << kTrainCsvHeader << '\n';
  for (const auto& r : rows)
    out << r.step << ',' << r.n_target << ',' << format_double(r.intra) << ',' << format_double(r.group) << ','
        << format_double(r.count) << ',' << format_double(r.quality) << ',' << format_double(r.total) << ','
        << format_double(r.objective) << ',' << format_double(r.kl) << '\n';
}

inline constexpr const char* kSnapshotFormat = "disco-toy-policy/1";

inline json policy_json(const toy::ToyPolicy& p) {
  const auto& s = p.shape();
  return json{{"format", kSnapshotFormat},
              {"dim", s.dim},
              {"slots", s.slots},
              {"count_min", s.count_min},
              {"count_max", s.count_max},
              {"face_means", std::vector<double>(p.face_means().begin(), p.face_means().end())},
              {"log_sigma", p.log_sigma()},
              {"count_logits", std::vector<double>(p.count_logits().begin(), p.count_logits().end())}};
}

inline toy::ToyPolicy policy_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != kSnapshotFormat) throw SchemaError(1, "not a toy policy snapshot");
    toy::PolicyShape s{j.at("dim").get<std::size_t>(), j.at("slots").get<std::size_t>(), j.at("count_min").get<int>(),
                       j.at("count_max").get<int>()};
    return toy::ToyPolicy(s, j.at("face_means").get<std::vector<double>>(), j.at("log_sigma").get<double>(),
                          j.at("count_logits").get<std::vector<double>>());
  } catch (const json::exception& e) {
    throw SchemaError(1, std::string("bad policy snapshot: ") + e.what());
  }
}

}  // namespace disco::io
