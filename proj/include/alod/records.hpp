#pragma once

// Detector-output data model and the JSONL pool format.
//
// Pool line schema:
//   {"image_id": str, "width": int, "height": int,
//    "proposals": [[x1,y1,x2,y2], ...],
//    "reference": [{"box": [...], "probs": [...], "background_prob": float?, "proposal_index": int?}],
//    "noisy": [{"level": int, "sigma": float, "detections": [...]}],
//    "ground_truth": [{"box": [...], "class": int}]?}

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "alod/geometry.hpp"

namespace alod {

inline constexpr double kProbabilitySumTolerance = 1e-6;
inline constexpr double kDefaultConfidenceFloor = 0.05;

struct ClassDistribution {
  std::vector<double> probs;  // one entry per foreground class
  std::optional<double> background_prob;

  friend bool operator==(const ClassDistribution&, const ClassDistribution&) = default;
};

struct ClassMax {
  double prob = 0.0;
  std::size_t class_index = 0;
};

inline void validate(const ClassDistribution& d) {
  if (d.probs.empty()) throw ValidationError("empty class distribution");
  double sum = 0.0;
  for (double p : d.probs) {
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
      throw ValidationError("class probability out of [0,1]");
    }
    sum += p;
  }
  if (d.background_prob) {
    const double bg = *d.background_prob;
    if (!std::isfinite(bg) || bg < 0.0 || bg > 1.0) {
      throw ValidationError("background probability out of [0,1]");
    }
    if (std::abs(sum + bg - 1.0) > kProbabilitySumTolerance) {
      throw ValidationError("class probabilities plus background do not sum to 1");
    }
  } else if (sum > 1.0 + kProbabilitySumTolerance) {
    throw ValidationError("class probabilities sum above 1");
  }
}

/// Highest foreground probability; background never wins. Ties go to the lowest index.
inline ClassMax pmax(const ClassDistribution& d) {
  if (d.probs.empty()) throw ValidationError("pmax of empty class distribution");
  ClassMax best{d.probs.front(), 0};
  for (std::size_t i = 1; i < d.probs.size(); ++i) {
    if (d.probs[i] > best.prob) best = {d.probs[i], i};
  }
  return best;
}

struct Detection {
  BBox box;
  ClassDistribution dist;
  std::optional<std::size_t> proposal_index;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct NoisyPass {
  int level = 0;
  double sigma = 0.0;
  std::vector<Detection> detections;

  friend bool operator==(const NoisyPass&, const NoisyPass&) = default;
};

struct GroundTruthObject {
  BBox box;
  int class_index = 0;

  friend bool operator==(const GroundTruthObject&, const GroundTruthObject&) = default;
};

struct ImageRecord {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::vector<BBox> proposals;
  std::vector<Detection> reference;
  std::vector<NoisyPass> noisy;  // sorted by level, levels 1..N
  std::optional<std::vector<GroundTruthObject>> ground_truth;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct ParseOptions {
  /// Detections whose foreground P_max falls below this are dropped.
  double confidence_floor = kDefaultConfidenceFloor;
  /// Expected number of foreground classes (from a class manifest), if known.
  std::optional<std::size_t> num_classes;
};

/// Record-level error carrying the offending image id (when known) and a field path.
class RecordError : public ValidationError {
 public:
  RecordError(std::string image_id, std::string path, const std::string& what)
      : ValidationError(format(image_id, path, what)),
        image_id_(std::move(image_id)),
        path_(std::move(path)) {}

  const std::string& image_id() const noexcept { return image_id_; }
  const std::string& path() const noexcept { return path_; }

 private:
  static std::string format(const std::string& id, const std::string& path, const std::string& what) {
    std::string msg;
    if (!id.empty()) msg += "image '" + id + "': ";
    if (!path.empty()) msg += "field '" + path + "': ";
    return msg + what;
  }

  std::string image_id_;
  std::string path_;
};

namespace detail {

using nlohmann::json;

class RecordReader {
 public:
  explicit RecordReader(const ParseOptions& opts) : opts_(opts) {}

  ImageRecord read(const json& j) {
    if (!j.is_object()) fail("", "record is not a JSON object");
    if (auto it = j.find("image_id"); it != j.end() && it->is_string()) {
      id_ = it->get<std::string>();
    }
    check_keys(j, "", {"image_id", "width", "height", "proposals", "reference", "noisy", "ground_truth"});

    ImageRecord r;
    const json& id = require(j, "image_id", "");
    if (!id.is_string() || id.get<std::string>().empty()) fail("image_id", "must be a non-empty string");
    r.image_id = id.get<std::string>();
    r.width = read_positive_int(require(j, "width", ""), "width");
    r.height = read_positive_int(require(j, "height", ""), "height");
    width_ = r.width;
    height_ = r.height;

    const json& props = require_array(j, "proposals", "");
    for (std::size_t i = 0; i < props.size(); ++i) {
      r.proposals.push_back(read_box(props[i], index_path("proposals", i)));
    }
    num_proposals_ = r.proposals.size();

    r.reference = read_detections(require_array(j, "reference", ""), "reference");

    const json& noisy = require_array(j, "noisy", "");
    std::set<int> levels;
    for (std::size_t i = 0; i < noisy.size(); ++i) {
      const std::string path = index_path("noisy", i);
      const json& p = noisy[i];
      if (!p.is_object()) fail(path, "must be an object");
      check_keys(p, path, {"level", "sigma", "detections"});
      NoisyPass pass;
      pass.level = read_positive_int(require(p, "level", path), path + ".level");
      if (!levels.insert(pass.level).second) fail(path + ".level", "duplicate noise level");
      pass.sigma = read_number(require(p, "sigma", path), path + ".sigma");
      if (pass.sigma < 0.0) fail(path + ".sigma", "must be non-negative");
      pass.detections = read_detections(require_array(p, "detections", path), path + ".detections");
      r.noisy.push_back(std::move(pass));
    }
    std::sort(r.noisy.begin(), r.noisy.end(),
              [](const NoisyPass& a, const NoisyPass& b) { return a.level < b.level; });
    for (std::size_t i = 0; i < r.noisy.size(); ++i) {
      if (r.noisy[i].level != static_cast<int>(i) + 1) fail("noisy", "noise levels must cover 1..N without gaps");
      if (i > 0 && !(r.noisy[i].sigma > r.noisy[i - 1].sigma)) {
        fail("noisy", "sigma must strictly increase with level");
      }
    }

    if (auto it = j.find("ground_truth"); it != j.end() && !it->is_null()) {
      if (!it->is_array()) fail("ground_truth", "must be an array");
      std::vector<GroundTruthObject> gts;
      for (std::size_t i = 0; i < it->size(); ++i) {
        const std::string path = index_path("ground_truth", i);
        const json& g = (*it)[i];
        if (!g.is_object()) fail(path, "must be an object");
        check_keys(g, path, {"box", "class"});
        GroundTruthObject obj;
        obj.box = read_box(require(g, "box", path), path + ".box");
        const json& c = require(g, "class", path);
        if (!c.is_number_integer()) fail(path + ".class", "must be an integer");
        const auto cls = c.get<long long>();
        const auto k = class_count();
        if (cls < 0 || (k && cls >= static_cast<long long>(*k))) fail(path + ".class", "class index out of range");
        obj.class_index = static_cast<int>(cls);
        gts.push_back(obj);
      }
      r.ground_truth = std::move(gts);
    }
    return r;
  }

  [[noreturn]] void fail(const std::string& path, const std::string& what) const {
    throw RecordError(id_, path, what);
  }

 private:
  static std::string index_path(const std::string& base, std::size_t i) {
    return base + "[" + std::to_string(i) + "]";
  }

  static std::string join(const std::string& base, const std::string& key) {
    return base.empty() ? key : base + "." + key;
  }

  void check_keys(const json& obj, const std::string& path, std::initializer_list<std::string_view> allowed) const {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
        fail(join(path, it.key()), "unknown field");
      }
    }
  }

  const json& require(const json& obj, const std::string& key, const std::string& path) const {
    auto it = obj.find(key);
    if (it == obj.end()) fail(join(path, key), "missing required field");
    return *it;
  }

  const json& require_array(const json& obj, const std::string& key, const std::string& path) const {
    const json& v = require(obj, key, path);
    if (!v.is_array()) fail(join(path, key), "must be an array");
    return v;
  }

  int read_positive_int(const json& v, const std::string& path) const {
    if (!v.is_number_integer()) fail(path, "must be an integer");
    const auto x = v.get<long long>();
    if (x <= 0 || x > 1'000'000'000) fail(path, "must be a positive integer");
    return static_cast<int>(x);
  }

  double read_number(const json& v, const std::string& path) const {
    if (!v.is_number()) fail(path, "must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail(path, "must be finite");
    return x;
  }

  BBox read_box(const json& v, const std::string& path) const {
    if (!v.is_array() || v.size() != 4) fail(path, "box must be an array of 4 numbers");
    BBox raw{read_number(v[0], path + "[0]"), read_number(v[1], path + "[1]"), read_number(v[2], path + "[2]"),
             read_number(v[3], path + "[3]")};
    if (!raw.is_valid()) fail(path, "box must satisfy x_max > x_min and y_max > y_min");
    BBox clamped = clamp_to_frame(raw, width_, height_);
    if (!clamped.is_valid()) fail(path, "box has no area inside the image after clamping");
    return clamped;
  }

  std::optional<std::size_t> class_count() const {
    if (opts_.num_classes) return opts_.num_classes;
    return seen_k_;
  }

  std::vector<Detection> read_detections(const json& arr, const std::string& base) {
    std::vector<Detection> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string path = index_path(base, i);
      const json& d = arr[i];
      if (!d.is_object()) fail(path, "must be an object");
      check_keys(d, path, {"box", "probs", "background_prob", "proposal_index"});
      Detection det;
      det.box = read_box(require(d, "box", path), path + ".box");
      const json& probs = require_array(d, "probs", path);
      if (probs.empty()) fail(path + ".probs", "must not be empty");
      for (std::size_t k = 0; k < probs.size(); ++k) {
        const std::string prob_path = index_path(path + ".probs", k);
        const double v = read_number(probs[k], prob_path);
        if (v < 0.0 || v > 1.0) fail(prob_path, "probability out of [0,1]");
        det.dist.probs.push_back(v);
      }
      if (auto it = d.find("background_prob"); it != d.end() && !it->is_null()) {
        det.dist.background_prob = read_number(*it, path + ".background_prob");
      }
      try {
        validate(det.dist);
      } catch (const ValidationError& e) {
        fail(path + ".probs", e.what());
      }
      const std::size_t k = det.dist.probs.size();
      if (auto expected = class_count(); expected && *expected != k) {
        fail(path + ".probs", "expected " + std::to_string(*expected) + " class probabilities, got " +
                                  std::to_string(k));
      }
      seen_k_ = k;
      if (auto it = d.find("proposal_index"); it != d.end() && !it->is_null()) {
        if (!it->is_number_integer()) fail(path + ".proposal_index", "must be an integer");
        const auto idx = it->get<long long>();
        if (idx < 0 || static_cast<std::size_t>(idx) >= num_proposals_) {
          fail(path + ".proposal_index", "references a missing proposal");
        }
        det.proposal_index = static_cast<std::size_t>(idx);
      }
      if (pmax(det.dist).prob < opts_.confidence_floor) continue;
      out.push_back(std::move(det));
    }
    return out;
  }

  const ParseOptions& opts_;
  std::string id_;
  int width_ = 0;
  int height_ = 0;
  std::size_t num_proposals_ = 0;
  std::optional<std::size_t> seen_k_;
};

inline json box_to_json(const BBox& b) { return json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

inline json detection_to_json(const Detection& d) {
  json j;
  j["box"] = box_to_json(d.box);
  j["probs"] = d.dist.probs;
  if (d.dist.background_prob) j["background_prob"] = *d.dist.background_prob;
  if (d.proposal_index) j["proposal_index"] = *d.proposal_index;
  return j;
}

}  // namespace detail

/// Parses and validates one pool line. Boxes are clamped to the image frame and
/// detections under the confidence floor are dropped.
inline ImageRecord parse_record(std::string_view line, const ParseOptions& opts = {}) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw RecordError("", "", std::string("malformed JSON: ") + e.what());
  }
  detail::RecordReader reader(opts);
  return reader.read(j);
}

/// Single-line JSON; doubles are written with round-trip precision.
inline std::string serialize_record(const ImageRecord& r) {
  using nlohmann::json;
  json j;
  j["image_id"] = r.image_id;
  j["width"] = r.width;
  j["height"] = r.height;
  j["proposals"] = json::array();
  for (const auto& p : r.proposals) j["proposals"].push_back(detail::box_to_json(p));
  j["reference"] = json::array();
  for (const auto& d : r.reference) j["reference"].push_back(detail::detection_to_json(d));
  j["noisy"] = json::array();
  for (const auto& pass : r.noisy) {
    json p;
    p["level"] = pass.level;
    p["sigma"] = pass.sigma;
    p["detections"] = json::array();
    for (const auto& d : pass.detections) p["detections"].push_back(detail::detection_to_json(d));
    j["noisy"].push_back(std::move(p));
  }
  if (r.ground_truth) {
    j["ground_truth"] = json::array();
    for (const auto& g : *r.ground_truth) {
      j["ground_truth"].push_back(json{{"box", detail::box_to_json(g.box)}, {"class", g.class_index}});
    }
  }
  return j.dump();
}

/// Error while loading a pool file; carries the 1-based line number.
class PoolError : public std::runtime_error {
 public:
  PoolError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

inline std::vector<ImageRecord> read_pool(std::istream& in, const ParseOptions& opts = {}) {
  std::vector<ImageRecord> pool;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      ImageRecord r = parse_record(line, opts);
      if (!ids.insert(r.image_id).second) {
        throw RecordError(r.image_id, "image_id", "duplicate image_id in pool");
      }
      pool.push_back(std::move(r));
    } catch (const ValidationError& e) {
      throw PoolError(line_no, e.what());
    }
  }
  return pool;
}

inline std::vector<ImageRecord> load_pool(const std::string& path, const ParseOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open pool file '" + path + "'");
  return read_pool(in, opts);
}

inline void write_pool(std::ostream& out, const std::vector<ImageRecord>& pool) {
  for (const auto& r : pool) out << serialize_record(r) << '\n';
}

inline void save_pool(const std::string& path, const std::vector<ImageRecord>& pool) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write pool file '" + path + "'");
  write_pool(out, pool);
}

/// Class-name manifest: a JSON array of K names, index-aligned with `probs`.
inline std::vector<std::string> load_class_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open class manifest '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("malformed class manifest: ") + e.what());
  }
  if (!j.is_array() || j.empty()) throw ValidationError("class manifest must be a non-empty array of names");
  std::vector<std::string> names;
  for (const auto& v : j) {
    if (!v.is_string()) throw ValidationError("class manifest entries must be strings");
    names.push_back(v.get<std::string>());
  }
  return names;
}

}  // namespace alod
