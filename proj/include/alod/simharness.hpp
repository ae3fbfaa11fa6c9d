#pragma once

// Seeded synthetic world plus a parametric detector whose errors shrink as it sees
// more labeled objects of a class. It emits ordinary ImageRecords, so campaigns over
// it exercise exactly the same scoring, selection, and evaluation code as real pools.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "alod/evaluation.hpp"
#include "alod/geometry.hpp"
#include "alod/parallel.hpp"
#include "alod/records.hpp"
#include "alod/scoring.hpp"
#include "alod/selection.hpp"

namespace alod::sim {

inline const std::vector<double> kDefaultSigmas{8, 16, 24, 32, 40, 48};

struct WorldConfig {
  int num_images = 400;
  int num_classes = 5;
  int min_objects = 1;
  int max_objects = 4;
  int image_width = 500;
  int image_height = 375;
  double min_box_fraction = 0.15;  // box side as a fraction of the image side
  double max_box_fraction = 0.5;
  double max_object_iou = 0.3;     // placement rejects heavier overlap between objects
  int placement_retries = 100;
  std::vector<double> difficulty;     // h_c per class; defaults to 10 for every class
  std::vector<double> class_weights;  // sampling weights; defaults to uniform
  std::string id_prefix = "img";
  std::uint64_t seed = 1;
};

/// Constants of the parametric detector. Rates are evaluated at competence s in [0,1)
/// and all vanish as s -> 1.
struct Calibration {
  double miss_at_zero = 0.6;         // miss(s) = miss_at_zero * (1-s)^miss_exponent
  double miss_exponent = 1.5;
  double localization_error = 0.3;   // corner std-dev, fraction of box side, times (1-s)
  double proposal_jitter = 0.25;     // proposal corner std-dev, fraction of box side, times (1-s)
  double noise_response = 0.006;     // noisy-pass corner std-dev per unit sigma, times (1-s)
  double noise_drop = 0.4;           // chance a box vanishes at the strongest level, times (1-s)
  double confidence_floor = 0.2;     // mean P_max at s = 0
  double localization_penalty = 0.5; // mean P_max drop per unit of (1 - IoU with truth)
  double confidence_noise = 0.15;    // P_max std-dev, times (1-s)
  double misclassification = 0.4;    // wrong-class chance, times (1-s)
  double false_positives = 1.5;      // expected false positives per image at s = 0
  double false_positive_max_confidence = 0.55;
  double background_share = 0.5;     // fraction of 1 - P_max assigned to background
  double truncation = 2.5;           // jitter truncation in standard deviations

  friend bool operator==(const Calibration&, const Calibration&) = default;
};

struct WorldImage {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::vector<GroundTruthObject> objects;
};

using World = std::vector<WorldImage>;

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Randomness: one stream per (seed, purpose, image), so draws do not depend on
// processing order or worker count.

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return detail::splitmix64(detail::splitmix64(a) ^ (b + 0x632BE59BD9B4E019ULL));
}

inline std::uint64_t mix_seed(std::uint64_t a, std::string_view tag) { return mix_seed(a, detail::fnv1a64(tag)); }

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int uniform_int(int lo, int hi) {  // inclusive
    const auto span = static_cast<std::uint64_t>(hi - lo + 1);
    return lo + static_cast<int>(engine_() % span);
  }

  /// Standard normal via Box-Muller; no cached state.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  double truncated_normal(double limit) {
    for (int i = 0; i < 64; ++i) {
      const double z = normal();
      if (std::abs(z) <= limit) return z;
    }
    return 0.0;
  }

  /// Exponential(1), used for Dirichlet(1,...,1) weights.
  double exponential() {
    double u = uniform();
    while (u <= 0.0) u = uniform();
    return -std::log(u);
  }

  int poisson(double mean) {
    if (mean <= 0.0) return 0;
    const double limit = std::exp(-mean);
    int k = 0;
    double p = uniform();
    while (p > limit && k < 1000) {
      ++k;
      p *= uniform();
    }
    return k;
  }

  std::size_t weighted_index(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = uniform() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (u < weights[i]) return i;
      u -= weights[i];
    }
    return weights.size() - 1;
  }

 private:
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// World generation

inline void validate(const WorldConfig& cfg) {
  if (cfg.num_images <= 0 || cfg.num_classes <= 0 || cfg.min_objects <= 0 || cfg.max_objects < cfg.min_objects ||
      cfg.image_width <= 0 || cfg.image_height <= 0 || cfg.placement_retries <= 0) {
    throw ValidationError("world config: counts must be positive and min_objects <= max_objects");
  }
  if (!(cfg.min_box_fraction > 0.0 && cfg.min_box_fraction <= cfg.max_box_fraction && cfg.max_box_fraction <= 1.0)) {
    throw ValidationError("world config: box fractions must satisfy 0 < min <= max <= 1");
  }
  const auto k = static_cast<std::size_t>(cfg.num_classes);
  if (!cfg.difficulty.empty() && cfg.difficulty.size() != k) {
    throw ValidationError("world config: one difficulty per class required");
  }
  for (double h : cfg.difficulty) {
    if (!std::isfinite(h) || h <= 0.0) throw ValidationError("world config: difficulties must be finite and positive");
  }
  if (!cfg.class_weights.empty()) {
    if (cfg.class_weights.size() != k) throw ValidationError("world config: one weight per class required");
    double sum = 0.0;
    for (double w : cfg.class_weights) {
      if (!std::isfinite(w) || w < 0.0) throw ValidationError("world config: class weights must be non-negative");
      sum += w;
    }
    if (!(sum > 0.0)) throw ValidationError("world config: class weights must not all be zero");
  }
}

inline std::vector<double> difficulties(const WorldConfig& cfg) {
  if (!cfg.difficulty.empty()) return cfg.difficulty;
  return std::vector<double>(static_cast<std::size_t>(cfg.num_classes), 10.0);
}

inline std::string image_name(const std::string& prefix, int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05d", index);
  return prefix + buf;
}

inline World generate_world(const WorldConfig& cfg) {
  validate(cfg);
  const auto k = static_cast<std::size_t>(cfg.num_classes);
  const std::vector<double> weights = cfg.class_weights.empty() ? std::vector<double>(k, 1.0) : cfg.class_weights;
  World world;
  world.reserve(static_cast<std::size_t>(cfg.num_images));
  for (int i = 0; i < cfg.num_images; ++i) {
    WorldImage img;
    img.image_id = image_name(cfg.id_prefix, i);
    img.width = cfg.image_width;
    img.height = cfg.image_height;
    Rng rng(mix_seed(mix_seed(cfg.seed, "world"), img.image_id));
    const int count = rng.uniform_int(cfg.min_objects, cfg.max_objects);
    for (int o = 0; o < count; ++o) {
      const auto cls = static_cast<int>(rng.weighted_index(weights));
      bool placed = false;
      for (int attempt = 0; attempt < cfg.placement_retries && !placed; ++attempt) {
        const double w = rng.uniform(cfg.min_box_fraction, cfg.max_box_fraction) * img.width;
        const double h = rng.uniform(cfg.min_box_fraction, cfg.max_box_fraction) * img.height;
        const double x = rng.uniform(0.0, img.width - w);
        const double y = rng.uniform(0.0, img.height - h);
        const BBox box{x, y, x + w, y + h};
        if (!box.is_valid()) continue;
        const bool clear = std::all_of(img.objects.begin(), img.objects.end(), [&](const GroundTruthObject& g) {
          return iou(g.box, box) <= cfg.max_object_iou;
        });
        if (clear) {
          img.objects.push_back({box, cls});
          placed = true;
        }
      }
      if (!placed) {
        throw SimulationError("cannot place object " + std::to_string(o) + " in " + img.image_id + " after " +
                              std::to_string(cfg.placement_retries) + " attempts");
      }
    }
    world.push_back(std::move(img));
  }
  return world;
}

// ---------------------------------------------------------------------------
// Detector state

class DetectorState {
 public:
  DetectorState(std::vector<double> difficulty, Calibration cal = {})
      : difficulty_(std::move(difficulty)), counts_(difficulty_.size(), 0), cal_(cal) {
    for (double h : difficulty_) {
      if (!std::isfinite(h) || h <= 0.0) throw ValidationError("difficulties must be finite and positive");
    }
  }

  std::size_t num_classes() const noexcept { return difficulty_.size(); }
  const Calibration& calibration() const noexcept { return cal_; }
  const std::vector<std::size_t>& counts() const noexcept { return counts_; }
  const std::set<std::string>& labeled() const noexcept { return labeled_; }

  /// s_c = n_c / (n_c + h_c)
  double competence(std::size_t c) const {
    const double n = static_cast<double>(counts_.at(c));
    return n / (n + difficulty_.at(c));
  }

  /// Adds the objects of newly labeled images. Relabeling an image is an error.
  void train_update(std::span<const WorldImage* const> images) {
    for (const WorldImage* img : images) {
      if (labeled_.contains(img->image_id)) throw ValidationError("image already labeled: " + img->image_id);
    }
    std::set<std::string> batch;
    for (const WorldImage* img : images) {
      if (!batch.insert(img->image_id).second) throw ValidationError("image labeled twice in a batch: " + img->image_id);
    }
    for (const WorldImage* img : images) {
      labeled_.insert(img->image_id);
      for (const auto& g : img->objects) ++counts_.at(static_cast<std::size_t>(g.class_index));
    }
  }

  void train_update(std::span<const WorldImage> images) {
    std::vector<const WorldImage*> ptrs;
    for (const auto& img : images) ptrs.push_back(&img);
    train_update(std::span<const WorldImage* const>(ptrs));
  }

  friend bool operator==(const DetectorState&, const DetectorState&) = default;

  double miss_rate(std::size_t c) const {
    return std::clamp(cal_.miss_at_zero * std::pow(1.0 - competence(c), cal_.miss_exponent), 0.0, 1.0);
  }
  double misclassification_rate(std::size_t c) const {
    return std::clamp(cal_.misclassification * (1.0 - competence(c)), 0.0, 1.0);
  }
  double false_positive_rate() const {
    double sum = 0.0;
    for (std::size_t c = 0; c < num_classes(); ++c) sum += 1.0 - competence(c);
    return cal_.false_positives * sum / static_cast<double>(num_classes());
  }

 private:
  std::vector<double> difficulty_;
  std::vector<std::size_t> counts_;
  std::set<std::string> labeled_;
  Calibration cal_;
};

// ---------------------------------------------------------------------------
// Detection simulation

struct SimulationOptions {
  std::vector<double> sigmas = kDefaultSigmas;
  bool with_proposals = true;  // false models a single-shot detector (no proposal links)
  bool with_noise = true;
  bool with_ground_truth = true;
  double confidence_floor = kDefaultConfidenceFloor;
};

namespace detail {

inline std::optional<BBox> jitter_box(Rng& rng, const BBox& base, double rel_sigma, double truncation, int width,
                                      int height) {
  const double w = base.width();
  const double h = base.height();
  for (int attempt = 0; attempt < 16; ++attempt) {
    const BBox b{base.x_min + rng.truncated_normal(truncation) * rel_sigma * w,
                 base.y_min + rng.truncated_normal(truncation) * rel_sigma * h,
                 base.x_max + rng.truncated_normal(truncation) * rel_sigma * w,
                 base.y_max + rng.truncated_normal(truncation) * rel_sigma * h};
    const BBox c = clamp_to_frame(b, width, height);
    if (c.is_valid() && c.width() >= 1.0 && c.height() >= 1.0) return c;
  }
  return std::nullopt;
}

/// Distribution with `predicted` at `p_max`; the remainder is split between background and
/// a Dirichlet spread over the other classes, flattened until `predicted` is the argmax.
inline ClassDistribution make_distribution(Rng& rng, std::size_t k, std::size_t predicted, double p_max,
                                           double background_share) {
  ClassDistribution d;
  d.probs.assign(k, 0.0);
  d.probs[predicted] = p_max;
  if (k > 1) {
    const double others = static_cast<double>(k - 1);
    const double fg_rest = std::min((1.0 - p_max) * (1.0 - background_share), 0.99 * p_max * others);
    std::vector<double> spread(k, 0.0);
    double total = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (c == predicted) continue;
      spread[c] = rng.exponential();
      total += spread[c];
    }
    for (int step = 0; step <= 8; ++step) {
      const double t = step / 8.0;
      double largest = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        if (c == predicted) continue;
        d.probs[c] = fg_rest * ((1.0 - t) * spread[c] / total + t / others);
        largest = std::max(largest, d.probs[c]);
      }
      if (largest < p_max) break;
    }
  }
  double sum = 0.0;
  for (double p : d.probs) sum += p;
  d.background_prob = std::max(0.0, 1.0 - sum);
  return d;
}

}  // namespace detail

/// One record for `image` under the detector `state`. Deterministic in (seed, image id).
inline ImageRecord simulate_detections(const DetectorState& state, const WorldImage& image, std::uint64_t seed,
                                       const SimulationOptions& opts = {}) {
  const Calibration& cal = state.calibration();
  const std::size_t k = state.num_classes();
  Rng rng(mix_seed(seed, image.image_id));

  ImageRecord rec;
  rec.image_id = image.image_id;
  rec.width = image.width;
  rec.height = image.height;

  struct Emitted {
    Detection det;
    double competence;
  };
  std::vector<Emitted> emitted;

  const auto add_proposal = [&](Detection& det, double rel_sigma) {
    if (!opts.with_proposals) return;
    auto p = detail::jitter_box(rng, det.box, rel_sigma, cal.truncation, image.width, image.height);
    rec.proposals.push_back(p.value_or(det.box));
    det.proposal_index = rec.proposals.size() - 1;
  };

  for (const auto& obj : image.objects) {
    const auto c = static_cast<std::size_t>(obj.class_index);
    const double s = state.competence(c);
    const double u_miss = rng.uniform();
    const double u_cls = rng.uniform();
    const auto wrong = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(k) - 1));
    const double z_conf = rng.normal();
    if (u_miss < state.miss_rate(c)) continue;

    Detection det;
    det.box = detail::jitter_box(rng, obj.box, cal.localization_error * (1.0 - s), cal.truncation, image.width,
                                 image.height)
                  .value_or(obj.box);
    const double loc_quality = iou(det.box, obj.box);
    std::size_t predicted = c;
    if (k > 1 && u_cls < state.misclassification_rate(c)) predicted = wrong == c ? (c + 1) % k : wrong;
    const double lo = 1.0 / static_cast<double>(k + 1) + 1e-3;
    double mean = cal.confidence_floor + (1.0 - cal.confidence_floor) * s - cal.localization_penalty * (1.0 - loc_quality);
    if (predicted != c) mean -= 0.5 * (mean - lo);
    const double p_max = std::clamp(mean + cal.confidence_noise * (1.0 - s) * z_conf, lo, 1.0);
    det.dist = detail::make_distribution(rng, k, predicted, p_max, cal.background_share);
    add_proposal(det, cal.proposal_jitter * (1.0 - s));
    emitted.push_back({std::move(det), s});
  }

  const auto add_false_positives = [&](std::vector<Emitted>& out, double rate) {
    const int n = rng.poisson(rate);
    std::vector<double> weights(k);
    for (std::size_t c = 0; c < k; ++c) weights[c] = 1.0 - state.competence(c);
    for (int i = 0; i < n; ++i) {
      const std::size_t cls = rng.weighted_index(weights);
      const double w = rng.uniform(0.1, 0.4) * image.width;
      const double h = rng.uniform(0.1, 0.4) * image.height;
      const double x = rng.uniform(0.0, image.width - w);
      const double y = rng.uniform(0.0, image.height - h);
      const double lo = 1.0 / static_cast<double>(k + 1) + 1e-3;
      const double p = rng.uniform(lo, std::max(lo, cal.false_positive_max_confidence));
      Detection det;
      det.box = BBox{x, y, x + w, y + h};
      det.dist = detail::make_distribution(rng, k, cls, p, cal.background_share);
      out.push_back({std::move(det), state.competence(cls)});
    }
  };
  add_false_positives(emitted, state.false_positive_rate());
  for (auto& e : emitted) {
    if (!e.det.proposal_index && opts.with_proposals) add_proposal(e.det, cal.proposal_jitter * (1.0 - e.competence));
  }

  for (auto& e : emitted) {
    if (pmax(e.det.dist).prob >= opts.confidence_floor) rec.reference.push_back(e.det);
  }

  if (opts.with_noise) {
    const double strongest = opts.sigmas.empty() ? 1.0 : opts.sigmas.back();
    for (std::size_t level = 0; level < opts.sigmas.size(); ++level) {
      const double sigma = opts.sigmas[level];
      NoisyPass pass;
      pass.level = static_cast<int>(level) + 1;
      pass.sigma = sigma;
      for (const auto& e : emitted) {
        const double s = e.competence;
        const double u_drop = rng.uniform();
        auto box = detail::jitter_box(rng, e.det.box, cal.noise_response * sigma * (1.0 - s), cal.truncation,
                                      image.width, image.height);
        if (u_drop < cal.noise_drop * (sigma / strongest) * (1.0 - s) || !box) continue;
        Detection nd;
        nd.box = *box;
        nd.dist = e.det.dist;
        if (pmax(nd.dist).prob >= opts.confidence_floor) pass.detections.push_back(std::move(nd));
      }
      std::vector<Emitted> spurious;
      add_false_positives(spurious, state.false_positive_rate() * (sigma / strongest));
      for (auto& e : spurious) {
        if (pmax(e.det.dist).prob >= opts.confidence_floor) pass.detections.push_back(std::move(e.det));
      }
      rec.noisy.push_back(std::move(pass));
    }
  }

  if (opts.with_ground_truth) rec.ground_truth = image.objects;
  return rec;
}

inline std::vector<ImageRecord> simulate_pool(const DetectorState& state, std::span<const WorldImage* const> images,
                                              std::uint64_t seed, const SimulationOptions& opts = {},
                                              unsigned workers = 1) {
  std::vector<ImageRecord> out(images.size());
  parallel_for(images.size(), workers,
               [&](std::size_t i) { out[i] = simulate_detections(state, *images[i], seed, opts); });
  return out;
}

// ---------------------------------------------------------------------------
// Experiments

struct CampaignSettings {
  std::size_t initial = 40;
  std::size_t batch = 20;
  std::size_t rounds = 6;
};

struct ExperimentConfig {
  WorldConfig world;
  int test_images = 300;
  Calibration calibration;
  CampaignSettings campaign;
  std::vector<Method> methods;
  std::vector<std::uint64_t> seeds{1};
  std::vector<double> sigmas = kDefaultSigmas;
  bool with_proposals = true;
  double match_iou = kDefaultMatchIou;
  ApVariant ap_variant = ApVariant::kPrefixPrecision;
  UndefinedPlacement undefined = UndefinedPlacement::kLast;
  unsigned workers = 1;
};

struct TrialResult {
  std::uint64_t seed = 0;
  std::string method;
  LearningCurve curve;
  std::vector<RoundRecord> history;
  std::vector<std::optional<double>> final_class_ap;
};

struct ExperimentResult {
  std::vector<TrialResult> trials;     // seed-major, then method
  std::vector<LearningCurve> mean_curves;  // one per method, averaged over seeds
};

/// Held-out evaluation split; shares the world's class mix but not its images.
inline WorldConfig test_world_config(const ExperimentConfig& cfg) {
  WorldConfig t = cfg.world;
  t.num_images = cfg.test_images;
  t.id_prefix = cfg.world.id_prefix + "_test";
  t.seed = mix_seed(cfg.world.seed, "test-split");
  return t;
}

inline void validate(const ExperimentConfig& cfg) {
  validate(cfg.world);
  if (cfg.test_images <= 0) throw ValidationError("test_images must be positive");
  if (cfg.methods.empty()) throw ValidationError("at least one method required");
  if (cfg.seeds.empty()) throw ValidationError("at least one seed required");
  if (cfg.campaign.batch == 0 && cfg.campaign.rounds > 0) throw ValidationError("batch must be positive");
  const auto pool = static_cast<std::size_t>(cfg.world.num_images);
  if (cfg.campaign.initial > pool || cfg.campaign.batch * cfg.campaign.rounds > pool - cfg.campaign.initial) {
    throw ValidationError("budget exceeds pool: initial + batch * rounds must not exceed " + std::to_string(pool));
  }
  if (!cfg.sigmas.empty()) {
    for (std::size_t i = 0; i < cfg.sigmas.size(); ++i) {
      if (!(cfg.sigmas[i] > 0.0) || (i > 0 && !(cfg.sigmas[i] > cfg.sigmas[i - 1]))) {
        throw ValidationError("noise sigmas must be positive and strictly increasing");
      }
    }
  }
  for (const auto& m : cfg.methods) validate(m);
}

struct Evaluation {
  double map = 0.0;
  std::vector<std::optional<double>> class_ap;
};

inline Evaluation evaluate_state(const DetectorState& state, const World& test, std::uint64_t seed,
                                 const ExperimentConfig& cfg) {
  SimulationOptions opts;
  opts.with_noise = false;
  opts.with_proposals = false;
  std::vector<const WorldImage*> ptrs;
  for (const auto& img : test) ptrs.push_back(&img);
  const auto records = simulate_pool(state, ptrs, seed, opts, cfg.workers);
  const auto match = match_records(records, state.num_classes(), cfg.match_iou);
  Evaluation ev;
  ev.class_ap = per_class_ap(match, cfg.ap_variant);
  ev.map = mean_ap(ev.class_ap).value_or(0.0);
  return ev;
}

/// One campaign: initial draw, then rounds of simulate -> score -> select -> train -> evaluate.
inline TrialResult run_trial(const World& world, const World& test, const Method& method, std::uint64_t seed,
                             const ExperimentConfig& cfg) {
  std::map<std::string, const WorldImage*> by_id;
  std::vector<std::string> ids;
  for (const auto& img : world) {
    by_id.emplace(img.image_id, &img);
    ids.push_back(img.image_id);
  }
  const auto lookup = [&](std::span<const std::string> sel) {
    std::vector<const WorldImage*> out;
    for (const auto& id : sel) out.push_back(by_id.at(id));
    return out;
  };

  DetectorState state(difficulties(cfg.world), cfg.calibration);
  const auto initial = draw_initial(ids, cfg.campaign.initial, mix_seed(seed, "initial"));
  CampaignState campaign(ids, initial);
  state.train_update(std::span<const WorldImage* const>(lookup(initial)));

  const std::uint64_t eval_seed = mix_seed(seed, "evaluation");
  TrialResult result;
  result.seed = seed;
  result.method = std::string(method_name(method.kind));
  result.curve.method = result.method;
  Evaluation ev = evaluate_state(state, test, eval_seed, cfg);
  result.curve.points.push_back({static_cast<double>(campaign.labeled().size()), ev.map});

  SimulationOptions pool_opts;
  pool_opts.sigmas = cfg.sigmas;
  pool_opts.with_proposals = cfg.with_proposals;
  pool_opts.with_noise = !cfg.sigmas.empty();

  for (std::size_t round = 1; round <= cfg.campaign.rounds; ++round) {
    const std::vector<std::string> unlabeled(campaign.unlabeled().begin(), campaign.unlabeled().end());
    const auto records =
        simulate_pool(state, lookup(unlabeled), mix_seed(mix_seed(seed, "pool"), round), pool_opts, cfg.workers);
    Method m = method;
    m.seed = mix_seed(mix_seed(seed, "random-priority") ^ method.seed, round);
    const auto scores = score_pool(m, records, cfg.workers);
    const auto selected = campaign.select_round(scores, cfg.campaign.batch, cfg.undefined);
    state.train_update(std::span<const WorldImage* const>(lookup(selected)));
    ev = evaluate_state(state, test, eval_seed, cfg);
    result.curve.points.push_back({static_cast<double>(campaign.labeled().size()), ev.map});
  }
  result.history = campaign.history();
  for (auto& h : result.history) h.method = result.method;
  result.final_class_ap = ev.class_ap;
  return result;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  const World world = generate_world(cfg.world);
  const World test = generate_world(test_world_config(cfg));
  ExperimentResult out;
  for (std::uint64_t seed : cfg.seeds) {
    for (const auto& m : cfg.methods) out.trials.push_back(run_trial(world, test, m, seed, cfg));
  }
  for (const auto& m : cfg.methods) {
    LearningCurve mean{std::string(method_name(m.kind)), {}};
    std::size_t n = 0;
    for (const auto& t : out.trials) {
      if (t.method != mean.method) continue;
      if (mean.points.empty()) {
        mean.points = t.curve.points;
      } else {
        for (std::size_t i = 0; i < mean.points.size(); ++i) mean.points[i].map += t.curve.points[i].map;
      }
      ++n;
    }
    for (auto& p : mean.points) p.map /= static_cast<double>(n);
    out.mean_curves.push_back(std::move(mean));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON configuration

inline Calibration calibration_from_json(const nlohmann::json& j, Calibration cal = {}) {
  const auto get = [&](const char* key, double& field) {
    if (auto it = j.find(key); it != j.end()) field = it->get<double>();
  };
  get("miss_at_zero", cal.miss_at_zero);
  get("miss_exponent", cal.miss_exponent);
  get("localization_error", cal.localization_error);
  get("proposal_jitter", cal.proposal_jitter);
  get("noise_response", cal.noise_response);
  get("noise_drop", cal.noise_drop);
  get("confidence_floor", cal.confidence_floor);
  get("localization_penalty", cal.localization_penalty);
  get("confidence_noise", cal.confidence_noise);
  get("misclassification", cal.misclassification);
  get("false_positives", cal.false_positives);
  get("false_positive_max_confidence", cal.false_positive_max_confidence);
  get("background_share", cal.background_share);
  get("truncation", cal.truncation);
  return cal;
}

inline WorldConfig world_from_json(const nlohmann::json& j) {
  WorldConfig w;
  w.num_images = j.value("num_images", w.num_images);
  w.num_classes = j.value("num_classes", w.num_classes);
  w.min_objects = j.value("min_objects", w.min_objects);
  w.max_objects = j.value("max_objects", w.max_objects);
  w.image_width = j.value("image_width", w.image_width);
  w.image_height = j.value("image_height", w.image_height);
  w.min_box_fraction = j.value("min_box_fraction", w.min_box_fraction);
  w.max_box_fraction = j.value("max_box_fraction", w.max_box_fraction);
  w.max_object_iou = j.value("max_object_iou", w.max_object_iou);
  w.placement_retries = j.value("placement_retries", w.placement_retries);
  w.difficulty = j.value("difficulty", w.difficulty);
  w.class_weights = j.value("class_weights", w.class_weights);
  w.id_prefix = j.value("id_prefix", w.id_prefix);
  w.seed = j.value("seed", w.seed);
  return w;
}

/// Simulation config file: {"world": {...}, "calibration": {...}, "test_images": n,
/// "sigmas": [...], "with_proposals": bool}. Campaign fields come from the caller.
inline ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  if (auto it = j.find("world"); it != j.end()) cfg.world = world_from_json(*it);
  if (auto it = j.find("calibration"); it != j.end()) cfg.calibration = calibration_from_json(*it);
  cfg.test_images = j.value("test_images", cfg.test_images);
  cfg.sigmas = j.value("sigmas", cfg.sigmas);
  cfg.with_proposals = j.value("with_proposals", cfg.with_proposals);
  cfg.match_iou = j.value("match_iou", cfg.match_iou);
  return cfg;
}

}  // namespace alod::sim
