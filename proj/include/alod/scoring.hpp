#pragma once

// Per-box and per-image informativeness metrics. Every method is reported in a
// single convention: a higher value means the image should be selected earlier.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "alod/csv.hpp"
#include "alod/geometry.hpp"
#include "alod/parallel.hpp"
#include "alod/records.hpp"

namespace alod {

enum class MethodKind {
  kRandom,        // R
  kClassification,  // C
  kStability,     // LS
  kStabilityClassification,  // LS+C
  kTightness,     // LT/C
  kTightnessGt,   // LT/C(GT)
  kAllCues,       // 3in1
  kTightnessMinAbsDiff,  // min(-|P-T|)
  kTightnessWsumJ,       // wsum(|T+P-1|)
  kTightnessWsumT,       // wsum(T)
};

struct Method {
  MethodKind kind = MethodKind::kClassification;
  double lambda = 1.0;
  double lambda_ls = 1.0;
  double lambda_lt = 1.0;
  std::uint64_t seed = 0;  // R only
};

inline constexpr std::string_view method_name(MethodKind k) {
  switch (k) {
    case MethodKind::kRandom: return "R";
    case MethodKind::kClassification: return "C";
    case MethodKind::kStability: return "LS";
    case MethodKind::kStabilityClassification: return "LS+C";
    case MethodKind::kTightness: return "LT/C";
    case MethodKind::kTightnessGt: return "LT/C(GT)";
    case MethodKind::kAllCues: return "3in1";
    case MethodKind::kTightnessMinAbsDiff: return "LT-minabs-diff";
    case MethodKind::kTightnessWsumJ: return "LT-wsum-j";
    case MethodKind::kTightnessWsumT: return "LT-wsum-t";
  }
  return "?";
}

inline constexpr MethodKind kAllMethodKinds[] = {
    MethodKind::kRandom,         MethodKind::kClassification,      MethodKind::kStability,
    MethodKind::kStabilityClassification, MethodKind::kTightness,  MethodKind::kTightnessGt,
    MethodKind::kAllCues,        MethodKind::kTightnessMinAbsDiff, MethodKind::kTightnessWsumJ,
    MethodKind::kTightnessWsumT};

/// Accepts the canonical names ("LS+C", "LT/C(GT)") and CLI spellings ("ls_c", "lt_c_gt"),
/// case-insensitively.
inline std::optional<MethodKind> parse_method_kind(std::string_view name) {
  std::string key;
  for (char ch : name) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) key.push_back(static_cast<char>(std::tolower(c)));
  }
  if (key == "r" || key == "random") return MethodKind::kRandom;
  if (key == "c") return MethodKind::kClassification;
  if (key == "ls") return MethodKind::kStability;
  if (key == "lsc") return MethodKind::kStabilityClassification;
  if (key == "ltc") return MethodKind::kTightness;
  if (key == "ltcgt") return MethodKind::kTightnessGt;
  if (key == "3in1") return MethodKind::kAllCues;
  if (key == "ltminabsdiff") return MethodKind::kTightnessMinAbsDiff;
  if (key == "ltwsumj") return MethodKind::kTightnessWsumJ;
  if (key == "ltwsumt") return MethodKind::kTightnessWsumT;
  return std::nullopt;
}

inline void validate(const Method& m) {
  if (!std::isfinite(m.lambda) || !std::isfinite(m.lambda_ls) || !std::isfinite(m.lambda_lt)) {
    throw ValidationError("method weights must be finite");
  }
}

struct Score {
  std::string image_id;
  std::string method;
  double value = 0.0;
  bool defined = false;

  friend bool operator==(const Score&, const Score&) = default;
};

// ---------------------------------------------------------------------------
// Classification uncertainty

inline double u_box(const Detection& d) { return 1.0 - pmax(d.dist).prob; }

/// Max box uncertainty over the reference detections; nullopt with no detections.
inline std::optional<double> u_image(const ImageRecord& r) {
  std::optional<double> best;
  for (const auto& d : r.reference) {
    const double u = u_box(d);
    if (!best || u > *best) best = u;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Localization tightness

/// IoU between the final box and the proposal it was refined from.
inline std::optional<double> tightness_box(const Detection& d, const ImageRecord& r) {
  if (!d.proposal_index || *d.proposal_index >= r.proposals.size()) return std::nullopt;
  return iou(d.box, r.proposals[*d.proposal_index]);
}

/// Best IoU against any ground-truth box; 0 when there is none.
inline double tightness_box_gt(const Detection& d, std::span<const GroundTruthObject> gts) {
  double best = 0.0;
  for (const auto& g : gts) best = std::max(best, iou(d.box, g.box));
  return best;
}

/// Agreement between localization and classification: |T + P_max - 1|.
inline double j_box(double tightness, double p_max) { return std::abs(tightness + p_max - 1.0); }

enum class TightnessSource { kProposal, kGroundTruth };

struct BoxTightness {
  double tightness;
  double p_max;
};

/// (T, P_max) of every detection eligible under `source`. Nullopt when the source is
/// unavailable for the record (no ground truth in GT mode).
inline std::optional<std::vector<BoxTightness>> eligible_tightness(const ImageRecord& r, TightnessSource source) {
  std::vector<BoxTightness> out;
  if (source == TightnessSource::kGroundTruth) {
    if (!r.ground_truth) return std::nullopt;
    for (const auto& d : r.reference) {
      out.push_back({tightness_box_gt(d, *r.ground_truth), pmax(d.dist).prob});
    }
    return out;
  }
  for (const auto& d : r.reference) {
    if (auto t = tightness_box(d, r)) out.push_back({*t, pmax(d.dist).prob});
  }
  return out;
}

/// Image tightness score: min over eligible boxes of J. Lower means more informative.
inline std::optional<double> t_image(const ImageRecord& r, TightnessSource source = TightnessSource::kProposal) {
  auto boxes = eligible_tightness(r, source);
  if (!boxes || boxes->empty()) return std::nullopt;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& b : *boxes) best = std::min(best, j_box(b.tightness, b.p_max));
  return best;
}

// ---------------------------------------------------------------------------
// Localization stability

/// Index of the detection in `pass` with the highest positive IoU against `ref`;
/// the earliest detection wins ties. Class labels are not consulted.
inline std::optional<std::size_t> correspondence(const Detection& ref, const NoisyPass& pass) {
  std::optional<std::size_t> best;
  double best_iou = 0.0;
  for (std::size_t i = 0; i < pass.detections.size(); ++i) {
    const double v = iou(ref.box, pass.detections[i].box);
    if (v > best_iou) {
      best_iou = v;
      best = i;
    }
  }
  return best;
}

/// Mean IoU with the corresponding box across all noise levels; a level without a
/// corresponding box contributes 0.
inline std::optional<double> s_box(const Detection& ref, std::span<const NoisyPass> noisy) {
  if (noisy.empty()) return std::nullopt;
  double sum = 0.0;
  for (const auto& pass : noisy) {
    if (auto idx = correspondence(ref, pass)) sum += iou(ref.box, pass.detections[*idx].box);
  }
  return std::clamp(sum / static_cast<double>(noisy.size()), 0.0, 1.0);
}

/// P_max-weighted mean of s_box over the reference detections.
inline std::optional<double> s_image(const ImageRecord& r) {
  if (r.reference.empty() || r.noisy.empty()) return std::nullopt;
  double num = 0.0;
  double den = 0.0;
  for (const auto& d : r.reference) {
    const double w = pmax(d.dist).prob;
    num += w * *s_box(d, r.noisy);
    den += w;
  }
  if (!(den > 0.0)) return std::nullopt;
  return std::clamp(num / den, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Method dispatch

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace detail

/// Deterministic value in [0,1) from (seed, image_id).
inline double random_priority(std::uint64_t seed, std::string_view image_id) {
  const std::uint64_t h = detail::splitmix64(detail::splitmix64(seed) ^ detail::fnv1a64(image_id));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline std::optional<double> informativeness_value(const Method& m, const ImageRecord& r) {
  switch (m.kind) {
    case MethodKind::kRandom:
      return random_priority(m.seed, r.image_id);
    case MethodKind::kClassification:
      return u_image(r);
    case MethodKind::kStability: {
      auto s = s_image(r);
      if (!s) return std::nullopt;
      return -*s;
    }
    case MethodKind::kStabilityClassification: {
      auto u = u_image(r);
      auto s = s_image(r);
      if (!u || !s) return std::nullopt;
      return *u - m.lambda * *s;
    }
    case MethodKind::kTightness:
    case MethodKind::kTightnessGt: {
      auto t = t_image(r, m.kind == MethodKind::kTightness ? TightnessSource::kProposal
                                                             : TightnessSource::kGroundTruth);
      if (!t) return std::nullopt;
      return -*t;
    }
    case MethodKind::kAllCues: {
      auto u = u_image(r);
      auto s = s_image(r);
      auto t = t_image(r, TightnessSource::kProposal);
      if (!u || !s || !t) return std::nullopt;
      return *u - m.lambda_ls * *s - m.lambda_lt * *t;
    }
    case MethodKind::kTightnessMinAbsDiff: {
      auto boxes = eligible_tightness(r, TightnessSource::kProposal);
      if (!boxes || boxes->empty()) return std::nullopt;
      double image_score = std::numeric_limits<double>::infinity();
      for (const auto& b : *boxes) image_score = std::min(image_score, -std::abs(b.p_max - b.tightness));
      return -image_score;
    }
    case MethodKind::kTightnessWsumJ:
    case MethodKind::kTightnessWsumT: {
      auto boxes = eligible_tightness(r, TightnessSource::kProposal);
      if (!boxes || boxes->empty()) return std::nullopt;
      double wsum = 0.0;
      for (const auto& b : *boxes) {
        const double box_score =
            m.kind == MethodKind::kTightnessWsumJ ? j_box(b.tightness, b.p_max) : b.tightness;
        wsum += b.p_max * box_score;
      }
      return -wsum;
    }
  }
  return std::nullopt;
}

inline Score informativeness(const Method& m, const ImageRecord& r) {
  Score s{r.image_id, std::string(method_name(m.kind)), 0.0, false};
  if (auto v = informativeness_value(m, r)) {
    s.value = *v;
    s.defined = std::isfinite(*v);
  }
  if (!s.defined) s.value = 0.0;
  return s;
}

/// Scores every record; results are in input order and do not depend on `workers`.
inline std::vector<Score> score_pool(const Method& m, std::span<const ImageRecord> pool, unsigned workers = 1) {
  validate(m);
  std::vector<Score> out(pool.size());
  parallel_for(pool.size(), workers, [&](std::size_t i) { out[i] = informativeness(m, pool[i]); });
  return out;
}

// ---------------------------------------------------------------------------
// Score CSV: image_id,method,value,defined

inline const std::vector<std::string> kScoreHeader{"image_id", "method", "value", "defined"};

inline void write_scores(std::ostream& out, std::span<const Score> scores) {
  csv::write_row(out, kScoreHeader);
  for (const auto& s : scores) {
    csv::write_row(out, {s.image_id, s.method, s.defined ? csv::fixed6(s.value) : "nan", s.defined ? "true" : "false"});
  }
}

inline std::vector<Score> read_scores(std::istream& in) {
  std::vector<Score> out;
  for (const auto& row : csv::read_table(in, kScoreHeader)) {
    Score s;
    s.image_id = row.fields[0];
    s.method = row.fields[1];
    if (s.image_id.empty()) throw csv::ParseError(row.number, "empty image_id");
    if (row.fields[3] == "true") {
      s.defined = true;
      s.value = csv::parse_double(row.fields[2], row.number);
      if (!std::isfinite(s.value)) throw csv::ParseError(row.number, "defined score must be finite");
    } else if (row.fields[3] != "false") {
      throw csv::ParseError(row.number, "defined must be 'true' or 'false'");
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace alod
