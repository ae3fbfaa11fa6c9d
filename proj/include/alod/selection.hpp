#pragma once

// Active-learning rounds: rank the unlabeled pool, move a batch into the labeled set,
// keep an append-only history. Also the selection-overlap analysis between methods.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "alod/geometry.hpp"
#include "alod/scoring.hpp"

namespace alod {

enum class UndefinedPlacement { kLast, kFirst };

/// Descending by value, ties by ascending image_id; undefined scores go after all defined
/// ones (or before, with kFirst). Input order never matters.
inline std::vector<std::string> rank(std::span<const Score> scores,
                                     UndefinedPlacement undefined = UndefinedPlacement::kLast) {
  std::vector<const Score*> order;
  order.reserve(scores.size());
  std::unordered_set<std::string> seen;
  for (const auto& s : scores) {
    if (!seen.insert(s.image_id).second) throw ValidationError("duplicate image_id in scores: " + s.image_id);
    order.push_back(&s);
  }
  const bool defined_first = undefined == UndefinedPlacement::kLast;
  std::sort(order.begin(), order.end(), [defined_first](const Score* a, const Score* b) {
    if (a->defined != b->defined) return a->defined == defined_first;
    if (a->defined && a->value != b->value) return a->value > b->value;
    return a->image_id < b->image_id;
  });
  std::vector<std::string> ids;
  ids.reserve(order.size());
  for (const Score* s : order) ids.push_back(s->image_id);
  return ids;
}

struct RoundRecord {
  int round = 0;
  std::string method;
  std::vector<std::string> selected;  // in rank order

  friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

/// Labeled/unlabeled partition of a fixed pool plus the round history.
class CampaignState {
 public:
  CampaignState(std::vector<std::string> pool, std::span<const std::string> initial_labeled) {
    std::set<std::string> all;
    for (auto& id : pool) {
      if (!all.insert(id).second) throw ValidationError("duplicate image id in pool: " + id);
    }
    for (const auto& id : initial_labeled) {
      if (!all.contains(id)) throw ValidationError("initial labeled id not in pool: " + id);
      if (!labeled_set_.insert(id).second) throw ValidationError("duplicate initial labeled id: " + id);
      labeled_.push_back(id);
    }
    for (const auto& id : labeled_) all.erase(id);
    unlabeled_ = std::move(all);
  }

  const std::vector<std::string>& labeled() const noexcept { return labeled_; }
  const std::set<std::string>& unlabeled() const noexcept { return unlabeled_; }
  const std::vector<RoundRecord>& history() const noexcept { return history_; }
  bool is_labeled(const std::string& id) const { return labeled_set_.contains(id); }
  std::size_t pool_size() const noexcept { return labeled_.size() + unlabeled_.size(); }

  /// Moves the top-k of rank(scores) into the labeled set. Scores must cover exactly the
  /// unlabeled set. Returns the selected ids in rank order.
  std::vector<std::string> select_round(std::span<const Score> scores, std::size_t k,
                                        UndefinedPlacement undefined = UndefinedPlacement::kLast) {
    if (k > unlabeled_.size()) {
      throw ValidationError("batch of " + std::to_string(k) + " exceeds unlabeled pool of " +
                            std::to_string(unlabeled_.size()));
    }
    for (const auto& s : scores) {
      if (!unlabeled_.contains(s.image_id)) {
        throw ValidationError("score for an image outside the unlabeled pool: " + s.image_id);
      }
    }
    auto ranking = rank(scores, undefined);
    if (ranking.size() != unlabeled_.size()) throw ValidationError("scores do not cover the unlabeled pool");
    if (k == 0) return {};
    ranking.resize(k);
    for (const auto& id : ranking) {
      unlabeled_.erase(id);
      labeled_set_.insert(id);
      labeled_.push_back(id);
    }
    const std::string method = scores.empty() ? std::string() : scores.front().method;
    history_.push_back({static_cast<int>(history_.size()) + 1, method, ranking});
    return ranking;
  }

 private:
  std::vector<std::string> labeled_;
  std::set<std::string> labeled_set_;
  std::set<std::string> unlabeled_;
  std::vector<RoundRecord> history_;
};

/// Uniform draw of `count` ids without replacement, reproducible in `seed`.
inline std::vector<std::string> draw_initial(std::vector<std::string> pool, std::size_t count, std::uint64_t seed) {
  if (count > pool.size()) throw ValidationError("initial labeled count exceeds pool size");
  std::sort(pool.begin(), pool.end());
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates with an explicit index draw keeps the result independent of the
  // standard library's shuffle implementation.
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t span = pool.size() - i;
    const std::size_t j = i + static_cast<std::size_t>(rng() % span);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

/// Percentage of `a` also present in `b`; both selections must have the same positive size.
inline double overlap_ratio(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.empty() || b.empty()) throw ValidationError("overlap of empty selections");
  if (a.size() != b.size()) throw ValidationError("overlap of selections with different sizes");
  const std::set<std::string> sa(a.begin(), a.end());
  const std::set<std::string> sb(b.begin(), b.end());
  if (sa.size() != a.size() || sb.size() != b.size()) throw ValidationError("selection contains duplicates");
  std::size_t common = 0;
  for (const auto& id : sa) common += sb.contains(id) ? 1 : 0;
  return 100.0 * static_cast<double>(common) / static_cast<double>(sa.size());
}

struct OverlapMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<double>> percent;  // percent[i][j]
};

/// Mean overlap per pair of histories, averaged over the rounds present in both
/// (or only `round` when given). Each history is labeled by its method.
inline OverlapMatrix overlap_matrix(std::span<const std::vector<RoundRecord>> histories,
                                    std::span<const std::string> labels, std::optional<int> round = std::nullopt) {
  if (histories.size() != labels.size()) throw ValidationError("one label per history required");
  OverlapMatrix m;
  m.labels.assign(labels.begin(), labels.end());
  const std::size_t n = histories.size();
  m.percent.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      std::size_t count = 0;
      for (const auto& ra : histories[i]) {
        if (round && ra.round != *round) continue;
        for (const auto& rb : histories[j]) {
          if (rb.round != ra.round) continue;
          sum += overlap_ratio(ra.selected, rb.selected);
          ++count;
        }
      }
      if (count == 0) throw ValidationError("histories '" + labels[i] + "' and '" + labels[j] + "' share no round");
      m.percent[i][j] = sum / static_cast<double>(count);
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// History JSONL: {"round": n, "method": str, "selected": [ids...]}

inline std::string history_line(const RoundRecord& r) {
  nlohmann::json j;
  j["round"] = r.round;
  j["method"] = r.method;
  j["selected"] = r.selected;
  return j.dump();
}

inline void write_history(std::ostream& out, std::span<const RoundRecord> history) {
  for (const auto& r : history) out << history_line(r) << '\n';
}

inline std::vector<RoundRecord> read_history(std::istream& in) {
  std::vector<RoundRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      RoundRecord r;
      r.round = j.at("round").get<int>();
      r.method = j.at("method").get<std::string>();
      r.selected = j.at("selected").get<std::vector<std::string>>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("history line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<RoundRecord> load_history(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open history file '" + path + "'");
  return read_history(in);
}

}  // namespace alod
