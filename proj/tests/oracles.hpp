#pragma once

// Independent reference computations used only by tests. Nothing here calls into the
// library's geometry or scoring code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace alod::oracle {

struct IntBox {
  int x0, y0, x1, y1;
};

/// Pixel count of the half-open cell set [x0,x1) x [y0,y1).
inline long long cells(const IntBox& b) {
  long long n = 0;
  for (int y = b.y0; y < b.y1; ++y) {
    for (int x = b.x0; x < b.x1; ++x) ++n;
  }
  return n;
}

/// IoU by rasterizing both boxes onto the unit grid and counting shared cells.
inline double raster_iou(const IntBox& a, const IntBox& b) {
  const int x_lo = std::min(a.x0, b.x0), x_hi = std::max(a.x1, b.x1);
  const int y_lo = std::min(a.y0, b.y0), y_hi = std::max(a.y1, b.y1);
  long long inter = 0, uni = 0;
  for (int y = y_lo; y < y_hi; ++y) {
    for (int x = x_lo; x < x_hi; ++x) {
      const bool in_a = x >= a.x0 && x < a.x1 && y >= a.y0 && y < a.y1;
      const bool in_b = x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1;
      inter += (in_a && in_b) ? 1 : 0;
      uni += (in_a || in_b) ? 1 : 0;
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// AP from recall levels: for each j = 1..G, the precision of the shortest prefix that
/// recovers j objects (0 if never), averaged over G.
inline double prefix_precision_ap(const std::vector<bool>& ranked_tp, int gt_count) {
  double sum = 0.0;
  for (int j = 1; j <= gt_count; ++j) {
    int found = 0;
    for (std::size_t k = 0; k < ranked_tp.size(); ++k) {
      if (ranked_tp[k]) ++found;
      if (found == j) {
        sum += static_cast<double>(j) / static_cast<double>(k + 1);
        break;
      }
    }
  }
  return sum / gt_count;
}

/// All-point interpolated AP: for each recall level j/G, the best precision among all
/// prefixes with at least j hits.
inline double interpolated_ap(const std::vector<bool>& ranked_tp, int gt_count) {
  double sum = 0.0;
  for (int j = 1; j <= gt_count; ++j) {
    double best = 0.0;
    int found = 0;
    for (std::size_t k = 0; k < ranked_tp.size(); ++k) {
      if (ranked_tp[k]) ++found;
      if (found >= j) best = std::max(best, static_cast<double>(found) / static_cast<double>(k + 1));
    }
    sum += best;
  }
  return sum / gt_count;
}

/// Maximum number of detection/GT pairs with eligible[d][g] that can be matched one-to-one.
inline int max_matching(const std::vector<std::vector<bool>>& eligible, std::size_t num_gt) {
  int best = 0;
  std::vector<bool> used(num_gt, false);
  std::function<void(std::size_t, int)> go = [&](std::size_t d, int count) {
    if (d == eligible.size()) {
      best = std::max(best, count);
      return;
    }
    go(d + 1, count);
    for (std::size_t g = 0; g < num_gt; ++g) {
      if (!used[g] && eligible[d][g]) {
        used[g] = true;
        go(d + 1, count + 1);
        used[g] = false;
      }
    }
  };
  go(0, 0);
  return best;
}

// ---------------------------------------------------------------------------
// Image scores recomputed from plain data with rasterized IoU.

struct Box {
  IntBox box;
  std::vector<double> probs;  // foreground classes only
  int proposal = -1;          // index into Record::proposals, -1 when unlinked
};

struct Record {
  std::vector<IntBox> proposals;
  std::vector<Box> reference;
  std::vector<std::vector<IntBox>> levels;  // detections of each noisy pass
};

inline double p_max(const Box& b) { return *std::max_element(b.probs.begin(), b.probs.end()); }

/// Largest 1 - P_max over the reference boxes.
inline std::optional<double> u_image(const Record& r) {
  if (r.reference.empty()) return std::nullopt;
  double best = 0.0;
  for (const auto& b : r.reference) best = std::max(best, 1.0 - p_max(b));
  return best;
}

/// Smallest |T + P_max - 1| over boxes linked to a proposal, T being the box/proposal IoU.
inline std::optional<double> t_image(const Record& r) {
  std::optional<double> best;
  for (const auto& b : r.reference) {
    if (b.proposal < 0) continue;
    const double t = raster_iou(b.box, r.proposals[static_cast<std::size_t>(b.proposal)]);
    const double j = std::abs(t + p_max(b) - 1.0);
    if (!best || j < *best) best = j;
  }
  return best;
}

/// Mean over levels of the best IoU any noisy detection reaches with the box.
inline std::optional<double> s_box(const Box& b, const Record& r) {
  if (r.levels.empty()) return std::nullopt;
  double sum = 0.0;
  for (const auto& level : r.levels) {
    double best = 0.0;
    for (const auto& d : level) best = std::max(best, raster_iou(b.box, d));
    sum += best;
  }
  return sum / static_cast<double>(r.levels.size());
}

/// P_max-weighted mean of s_box.
inline std::optional<double> s_image(const Record& r) {
  if (r.reference.empty() || r.levels.empty()) return std::nullopt;
  double num = 0.0, den = 0.0;
  for (const auto& b : r.reference) {
    num += p_max(b) * *s_box(b, r);
    den += p_max(b);
  }
  return num / den;
}

}  // namespace alod::oracle
