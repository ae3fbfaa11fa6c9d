#pragma once

// Detection evaluation (per-class AP, mAP at a fixed IoU threshold), the
// difficult-category split, and relative label saving between learning curves.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "alod/csv.hpp"
#include "alod/geometry.hpp"
#include "alod/records.hpp"

namespace alod {

inline constexpr double kDefaultMatchIou = 0.5;
inline constexpr double kDifficultApThreshold = 0.40;

struct EvalDetection {
  BBox box;
  int class_index = 0;
  double confidence = 0.0;
};

struct ScoredHit {
  double confidence = 0.0;
  bool true_positive = false;
};

/// Per-class ranked hits (sorted by confidence, descending) and ground-truth counts.
struct MatchResult {
  std::vector<std::vector<ScoredHit>> hits;
  std::vector<std::size_t> gt_count;

  explicit MatchResult(std::size_t num_classes = 0) : hits(num_classes), gt_count(num_classes, 0) {}
  std::size_t num_classes() const noexcept { return gt_count.size(); }
};

struct ImageEvalInput {
  std::vector<EvalDetection> detections;
  std::vector<GroundTruthObject> ground_truth;
};

/// Greedy matching per class: detections in descending confidence each claim the
/// still-unmatched same-class GT with the highest IoU >= threshold; the rest are FPs.
inline void accumulate_matches(MatchResult& result, std::span<const EvalDetection> dets,
                               std::span<const GroundTruthObject> gts, double iou_threshold) {
  const std::size_t k = result.num_classes();
  for (const auto& g : gts) {
    if (g.class_index < 0 || static_cast<std::size_t>(g.class_index) >= k) {
      throw ValidationError("ground-truth class out of range");
    }
    ++result.gt_count[static_cast<std::size_t>(g.class_index)];
  }
  std::vector<std::size_t> order(dets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].confidence > dets[b].confidence; });
  std::vector<bool> matched(gts.size(), false);
  for (std::size_t idx : order) {
    const auto& d = dets[idx];
    if (d.class_index < 0 || static_cast<std::size_t>(d.class_index) >= k) {
      throw ValidationError("detection class out of range");
    }
    std::optional<std::size_t> best;
    double best_iou = iou_threshold;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (matched[g] || gts[g].class_index != d.class_index) continue;
      const double v = iou(d.box, gts[g].box);
      if (v >= best_iou && (!best || v > best_iou)) {
        best_iou = v;
        best = g;
      }
    }
    if (best) matched[*best] = true;
    result.hits[static_cast<std::size_t>(d.class_index)].push_back({d.confidence, best.has_value()});
  }
}

inline void sort_hits(MatchResult& result) {
  for (auto& h : result.hits) {
    std::stable_sort(h.begin(), h.end(),
                     [](const ScoredHit& a, const ScoredHit& b) { return a.confidence > b.confidence; });
  }
}

inline MatchResult match_detections(std::span<const ImageEvalInput> images, std::size_t num_classes,
                                    double iou_threshold = kDefaultMatchIou) {
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) throw ValidationError("IoU threshold must lie in (0,1)");
  MatchResult result(num_classes);
  for (const auto& img : images) accumulate_matches(result, img.detections, img.ground_truth, iou_threshold);
  sort_hits(result);
  return result;
}

/// Detections as evaluated: argmax foreground class, confidence P_max.
inline std::vector<EvalDetection> eval_detections(std::span<const Detection> dets) {
  std::vector<EvalDetection> out;
  out.reserve(dets.size());
  for (const auto& d : dets) {
    const auto m = pmax(d.dist);
    out.push_back({d.box, static_cast<int>(m.class_index), m.prob});
  }
  return out;
}

/// Matches the reference detections of every record against its ground truth.
inline MatchResult match_records(std::span<const ImageRecord> records, std::size_t num_classes,
                                 double iou_threshold = kDefaultMatchIou) {
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) throw ValidationError("IoU threshold must lie in (0,1)");
  MatchResult result(num_classes);
  for (const auto& r : records) {
    if (!r.ground_truth) throw ValidationError("image '" + r.image_id + "' has no ground truth to evaluate against");
    accumulate_matches(result, eval_detections(r.reference), *r.ground_truth, iou_threshold);
  }
  sort_hits(result);
  return result;
}

enum class ApVariant {
  /// Mean of the precision at the rank of every true positive (non-interpolated).
  kPrefixPrecision,
  /// All-point interpolation: precision made non-increasing from the right, then integrated over recall.
  kAllPointInterpolated,
};

/// AP of a ranked hit list against `gt_count` ground-truth objects; nullopt when gt_count is 0.
inline std::optional<double> average_precision(std::span<const ScoredHit> ranked, std::size_t gt_count,
                                               ApVariant variant = ApVariant::kPrefixPrecision) {
  if (gt_count == 0) return std::nullopt;
  std::vector<double> precision;
  std::vector<bool> is_tp;
  precision.reserve(ranked.size());
  std::size_t tp = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (ranked[i].true_positive) ++tp;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    is_tp.push_back(ranked[i].true_positive);
  }
  if (variant == ApVariant::kAllPointInterpolated) {
    for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < precision.size(); ++i) {
    if (is_tp[i]) sum += precision[i];
  }
  return std::clamp(sum / static_cast<double>(gt_count), 0.0, 1.0);
}

inline std::optional<double> average_precision(const MatchResult& m, std::size_t class_index,
                                               ApVariant variant = ApVariant::kPrefixPrecision) {
  return average_precision(m.hits.at(class_index), m.gt_count.at(class_index), variant);
}

inline std::vector<std::optional<double>> per_class_ap(const MatchResult& m,
                                                       ApVariant variant = ApVariant::kPrefixPrecision) {
  std::vector<std::optional<double>> out;
  for (std::size_t c = 0; c < m.num_classes(); ++c) out.push_back(average_precision(m, c, variant));
  return out;
}

/// Mean over classes with a defined AP.
inline std::optional<double> mean_ap(std::span<const std::optional<double>> per_class) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& ap : per_class) {
    if (ap) {
      sum += *ap;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Difficult-category analysis

struct ClasswiseReport {
  std::vector<std::size_t> difficult;
  std::vector<std::size_t> non_difficult;
  std::optional<double> difficult_delta;      // mean AP(method) - AP(baseline) over difficult classes
  std::optional<double> non_difficult_delta;
  std::optional<double> overall_delta;
};

/// Splits classes by the passive learner's AP (< threshold is difficult) and reports the
/// mean improvement of `method` over `baseline` in each group.
inline ClasswiseReport classwise_report(std::span<const std::optional<double>> passive,
                                        std::span<const std::optional<double>> baseline,
                                        std::span<const std::optional<double>> method,
                                        double threshold = kDifficultApThreshold) {
  if (passive.empty()) throw ValidationError("missing passive-learning APs");
  if (baseline.size() != passive.size() || method.size() != passive.size()) {
    throw ValidationError("per-class AP lists differ in length");
  }
  ClasswiseReport rep;
  double sd = 0.0, sn = 0.0;
  for (std::size_t c = 0; c < passive.size(); ++c) {
    if (!passive[c] || !baseline[c] || !method[c]) continue;
    const double delta = *method[c] - *baseline[c];
    if (*passive[c] < threshold) {
      rep.difficult.push_back(c);
      sd += delta;
    } else {
      rep.non_difficult.push_back(c);
      sn += delta;
    }
  }
  if (!rep.difficult.empty()) rep.difficult_delta = sd / static_cast<double>(rep.difficult.size());
  if (!rep.non_difficult.empty()) rep.non_difficult_delta = sn / static_cast<double>(rep.non_difficult.size());
  const std::size_t total = rep.difficult.size() + rep.non_difficult.size();
  if (total > 0) rep.overall_delta = (sd + sn) / static_cast<double>(total);
  return rep;
}

inline ClasswiseReport classwise_report(std::span<const std::optional<double>> passive,
                                        std::span<const std::optional<double>> method,
                                        double threshold = kDifficultApThreshold) {
  return classwise_report(passive, passive, method, threshold);
}

// ---------------------------------------------------------------------------
// Learning curves and relative saving

struct CurvePoint {
  double labels = 0.0;
  double map = 0.0;

  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

struct LearningCurve {
  std::string method;
  std::vector<CurvePoint> points;  // strictly increasing in labels

  friend bool operator==(const LearningCurve&, const LearningCurve&) = default;
};

inline void validate(const LearningCurve& c) {
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    const auto& p = c.points[i];
    if (!std::isfinite(p.labels) || !std::isfinite(p.map) || p.map < 0.0 || p.map > 1.0) {
      throw ValidationError("curve '" + c.method + "': point out of range");
    }
    if (i > 0 && !(p.labels > c.points[i - 1].labels)) {
      throw ValidationError("curve '" + c.method + "': label counts must strictly increase");
    }
  }
}

/// Smallest label count at which the linearly interpolated curve reaches `target`.
inline std::optional<double> labels_to_reach(const LearningCurve& c, double target) {
  if (c.points.empty()) return std::nullopt;
  if (c.points.front().map >= target) return c.points.front().labels;
  for (std::size_t i = 1; i < c.points.size(); ++i) {
    const auto& a = c.points[i - 1];
    const auto& b = c.points[i];
    if (b.map >= target) {
      const double f = (target - a.map) / (b.map - a.map);
      return a.labels + f * (b.labels - a.labels);
    }
  }
  return std::nullopt;
}

struct SavingPoint {
  double labels = 0.0;        // passive label count
  std::optional<double> saving;  // (n - n') / n; nullopt when the method never reaches the mAP
};

struct SavingReport {
  std::vector<SavingPoint> points;
  std::optional<double> average;  // over reached points
  bool flagged = false;           // some point skipped, or the average is negative
};

inline SavingReport relative_saving(const LearningCurve& passive, const LearningCurve& method) {
  validate(passive);
  validate(method);
  if (passive.points.empty() || method.points.size() < 2) {
    throw ValidationError("relative saving needs a passive curve and a method curve with at least 2 points");
  }
  SavingReport rep;
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& p : passive.points) {
    SavingPoint sp{p.labels, std::nullopt};
    if (auto reach = labels_to_reach(method, p.map); reach && p.labels > 0.0) {
      sp.saving = (p.labels - *reach) / p.labels;
      sum += *sp.saving;
      ++n;
    } else {
      rep.flagged = true;
    }
    rep.points.push_back(sp);
  }
  if (n > 0) rep.average = sum / static_cast<double>(n);
  if (rep.average && *rep.average < 0.0) rep.flagged = true;
  return rep;
}

// ---------------------------------------------------------------------------
// CSV: curves as `method,labels,map`; per-class APs as `method,class,ap`.

inline const std::vector<std::string> kCurveHeader{"method", "labels", "map"};
inline const std::vector<std::string> kClassApHeader{"method", "class", "ap"};

inline std::string format_labels(double labels) {
  if (labels == std::floor(labels) && std::abs(labels) < 1e15) return std::to_string(static_cast<long long>(labels));
  return csv::fixed6(labels);
}

inline void write_curves(std::ostream& out, std::span<const LearningCurve> curves) {
  csv::write_row(out, kCurveHeader);
  for (const auto& c : curves) {
    for (const auto& p : c.points) csv::write_row(out, {c.method, format_labels(p.labels), csv::fixed6(p.map)});
  }
}

/// Curves in first-appearance order of their method names.
inline std::vector<LearningCurve> read_curves(std::istream& in) {
  std::vector<LearningCurve> curves;
  for (const auto& row : csv::read_table(in, kCurveHeader)) {
    const auto& method = row.fields[0];
    if (method.empty()) throw csv::ParseError(row.number, "empty method name");
    auto it = std::find_if(curves.begin(), curves.end(), [&](const LearningCurve& c) { return c.method == method; });
    if (it == curves.end()) {
      curves.push_back({method, {}});
      it = std::prev(curves.end());
    }
    const CurvePoint p{csv::parse_double(row.fields[1], row.number), csv::parse_double(row.fields[2], row.number)};
    if (!std::isfinite(p.labels) || !std::isfinite(p.map) || p.map < 0.0 || p.map > 1.0) {
      throw csv::ParseError(row.number, "curve value out of range");
    }
    if (!it->points.empty() && !(p.labels > it->points.back().labels)) {
      throw csv::ParseError(row.number, "label counts must strictly increase per method");
    }
    it->points.push_back(p);
  }
  return curves;
}

struct ClassAps {
  std::string method;
  std::vector<std::optional<double>> ap;  // by class index
};

inline void write_class_aps(std::ostream& out, std::span<const ClassAps> sets) {
  csv::write_row(out, kClassApHeader);
  for (const auto& s : sets) {
    for (std::size_t c = 0; c < s.ap.size(); ++c) {
      csv::write_row(out, {s.method, std::to_string(c), s.ap[c] ? csv::fixed6(*s.ap[c]) : "nan"});
    }
  }
}

inline std::vector<ClassAps> read_class_aps(std::istream& in) {
  std::vector<ClassAps> sets;
  for (const auto& row : csv::read_table(in, kClassApHeader)) {
    const auto& method = row.fields[0];
    auto it = std::find_if(sets.begin(), sets.end(), [&](const ClassAps& s) { return s.method == method; });
    if (it == sets.end()) {
      sets.push_back({method, {}});
      it = std::prev(sets.end());
    }
    const long long cls = csv::parse_int(row.fields[1], row.number);
    if (cls < 0 || cls > 100000) throw csv::ParseError(row.number, "class index out of range");
    const auto c = static_cast<std::size_t>(cls);
    if (it->ap.size() <= c) it->ap.resize(c + 1);
    if (row.fields[2] != "nan") {
      const double v = csv::parse_double(row.fields[2], row.number);
      if (v < 0.0 || v > 1.0) throw csv::ParseError(row.number, "AP out of [0,1]");
      it->ap[c] = v;
    }
  }
  return sets;
}

}  // namespace alod
