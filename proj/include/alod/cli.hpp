#pragma once

// Command-line front end. Exit codes: 0 success, 1 runtime or I/O failure, 2 usage error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "alod/csv.hpp"
#include "alod/evaluation.hpp"
#include "alod/parallel.hpp"
#include "alod/records.hpp"
#include "alod/scoring.hpp"
#include "alod/selection.hpp"
#include "alod/simharness.hpp"
#include "alod/svg.hpp"

namespace alod::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace fs = std::filesystem;

/// Round-pool naming scheme for real campaigns: <dir>/pool.round{n}.jsonl
inline fs::path round_pool_path(const fs::path& dir, std::size_t round) {
  return dir / ("pool.round" + std::to_string(round) + ".jsonl");
}

/// Optional per-round evaluation records (test split with ground truth): <dir>/eval.round{n}.jsonl
inline fs::path round_eval_path(const fs::path& dir, std::size_t round) {
  return dir / ("eval.round" + std::to_string(round) + ".jsonl");
}

struct MethodFlags {
  std::string name;
  double lambda = 1.0;
  double lambda_ls = 1.0;
  double lambda_lt = 1.0;
  std::uint64_t seed = 0;
};

inline Method resolve_method(const std::string& name, const MethodFlags& f) {
  auto kind = parse_method_kind(name);
  if (!kind) throw UsageError("unknown method '" + name + "'");
  Method m{*kind, f.lambda, f.lambda_ls, f.lambda_lt, f.seed};
  try {
    validate(m);
  } catch (const ValidationError& e) {
    throw UsageError(e.what());
  }
  return m;
}

namespace detail {

inline std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

inline std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  return in;
}

inline nlohmann::json load_json(const fs::path& path) {
  auto in = open_in(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed JSON in '" + path.string() + "': " + e.what());
  }
}

inline void warn_undefined(std::ostream& err, std::span<const Score> scores, const std::string& method) {
  std::size_t undefined = 0;
  for (const auto& s : scores) undefined += s.defined ? 0 : 1;
  if (undefined == 0) return;
  err << "warning: " << undefined << " of " << scores.size() << " images have no defined " << method
      << " score (missing detections, proposal links, noisy passes, or ground truth)\n";
}

inline std::vector<std::string> read_id_list(const fs::path& path) {
  auto in = open_in(path);
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// score

struct ScoreOptions {
  std::string pool;
  std::string out;
  std::string classes;
  MethodFlags method;
  double floor = kDefaultConfidenceFloor;
  unsigned workers = 0;
};

inline int run_score(const ScoreOptions& o, std::ostream& err) {
  const Method m = resolve_method(o.method.name, o.method);
  ParseOptions popts;
  popts.confidence_floor = o.floor;
  if (!o.classes.empty()) popts.num_classes = load_class_manifest(o.classes).size();
  const auto pool = load_pool(o.pool, popts);
  const auto scores = score_pool(m, pool, o.workers ? o.workers : default_workers());
  detail::warn_undefined(err, scores, std::string(method_name(m.kind)));
  auto out = detail::open_out(o.out);
  write_scores(out, scores);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// select

struct SelectOptions {
  std::string scores;
  std::string labeled;
  std::string out;
  std::string history;
  std::size_t batch = 0;
  int round = 1;
  bool undefined_first = false;
};

inline int run_select(const SelectOptions& o) {
  auto in = detail::open_in(o.scores);
  auto scores = read_scores(in);
  std::vector<std::string> ids;
  for (const auto& s : scores) ids.push_back(s.image_id);
  std::vector<std::string> labeled;
  if (!o.labeled.empty()) labeled = detail::read_id_list(o.labeled);
  // Labeled ids join the pool so the partition is explicit; their scores are rejected.
  for (const auto& id : labeled) {
    if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
  }
  CampaignState state(ids, labeled);
  const auto selected =
      state.select_round(scores, o.batch, o.undefined_first ? UndefinedPlacement::kFirst : UndefinedPlacement::kLast);
  auto out = detail::open_out(o.out);
  for (const auto& id : selected) out << id << '\n';
  if (!o.history.empty()) {
    std::ofstream hist(o.history, std::ios::app | std::ios::binary);
    if (!hist) throw std::runtime_error("cannot append to '" + o.history + "'");
    RoundRecord r{o.round, scores.empty() ? std::string() : scores.front().method, selected};
    hist << history_line(r) << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// campaign

struct CampaignOptions {
  std::string pool_dir;
  std::string sim_config;
  std::string config;
  std::string out;
  std::vector<std::string> methods;
  MethodFlags method;
  std::size_t batch = 200;
  std::size_t rounds = 15;
  std::size_t init = 500;
  std::uint64_t seed = 1;
  std::size_t trials = 1;
  double floor = kDefaultConfidenceFloor;
  unsigned workers = 0;
  bool undefined_first = false;
  bool dry_run = false;
};

/// Campaign config file: {"method": str | [str], "batch": n, "rounds": n, "init": n, "seed": n,
/// "trials": n, "lambda": x, "lambda_ls": x, "lambda_lt": x, "initial_labeled": [ids]}.
/// Command-line flags given explicitly take precedence.
struct CampaignFile {
  std::optional<std::vector<std::string>> initial_labeled;
};

inline void write_mean_class_ap(std::ostream& out, const sim::ExperimentResult& res,
                                std::span<const Method> methods) {
  std::vector<ClassAps> sets;
  for (const auto& m : methods) {
    ClassAps set{std::string(method_name(m.kind)), {}};
    std::vector<std::size_t> n;
    for (const auto& t : res.trials) {
      if (t.method != set.method) continue;
      if (set.ap.size() < t.final_class_ap.size()) {
        set.ap.resize(t.final_class_ap.size());
        n.resize(t.final_class_ap.size(), 0);
      }
      for (std::size_t c = 0; c < t.final_class_ap.size(); ++c) {
        if (!t.final_class_ap[c]) continue;
        set.ap[c] = set.ap[c].value_or(0.0) + *t.final_class_ap[c];
        ++n[c];
      }
    }
    for (std::size_t c = 0; c < set.ap.size(); ++c) {
      if (set.ap[c]) *set.ap[c] /= static_cast<double>(n[c]);
    }
    sets.push_back(std::move(set));
  }
  write_class_aps(out, sets);
}

inline int run_campaign_sim(const CampaignOptions& o, const std::vector<Method>& methods, std::ostream& out,
                            std::ostream& err) {
  sim::ExperimentConfig cfg;
  try {
    cfg = sim::experiment_from_json(detail::load_json(o.sim_config));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("invalid simulation config: " + std::string(e.what()));
  }
  cfg.campaign = {o.init, o.batch, o.rounds};
  cfg.methods = methods;
  cfg.seeds.clear();
  for (std::size_t t = 0; t < o.trials; ++t) cfg.seeds.push_back(o.seed + t);
  cfg.workers = o.workers ? o.workers : default_workers();
  cfg.undefined = o.undefined_first ? UndefinedPlacement::kFirst : UndefinedPlacement::kLast;
  const auto pool = static_cast<std::size_t>(std::max(cfg.world.num_images, 0));
  if (o.init > pool || o.batch * o.rounds > pool - o.init) {
    throw UsageError("budget exceeds pool: init + batch * rounds must not exceed " + std::to_string(pool) +
                     " images");
  }
  sim::validate(cfg);
  if (o.dry_run) {
    out << "simulation campaign: pool " << cfg.world.num_images << " images, init " << o.init << ", batch "
        << o.batch << ", rounds " << o.rounds << ", " << methods.size() << " method(s), " << o.trials
        << " trial(s)\n";
    return kExitOk;
  }
  const auto res = sim::run_experiment(cfg);
  fs::create_directories(o.out);
  for (std::uint64_t seed : cfg.seeds) {
    const fs::path path = fs::path(o.out) / (cfg.seeds.size() == 1 ? std::string("history.jsonl")
                                                                   : "history.seed" + std::to_string(seed) + ".jsonl");
    auto hist = detail::open_out(path);
    for (const auto& t : res.trials) {
      if (t.seed == seed) write_history(hist, t.history);
    }
  }
  {
    auto curves = detail::open_out(fs::path(o.out) / "curves.csv");
    write_curves(curves, res.mean_curves);
  }
  {
    auto aps = detail::open_out(fs::path(o.out) / "class_ap.csv");
    write_mean_class_ap(aps, res, methods);
  }
  for (const auto& c : res.mean_curves) {
    err << c.method << ": final mAP " << csv::fixed6(c.points.back().map) << " at " << format_labels(c.points.back().labels)
        << " labels\n";
  }
  return kExitOk;
}

inline int run_campaign_real(const CampaignOptions& o, const CampaignFile& file, const std::vector<Method>& methods,
                             std::ostream& out, std::ostream& err) {
  if (methods.size() != 1) throw UsageError("real-pool campaigns take exactly one --method");
  const fs::path dir(o.pool_dir);
  const std::size_t pool_rounds = std::max<std::size_t>(o.rounds, 1);
  for (std::size_t r = 1; r <= pool_rounds; ++r) {
    const auto path = round_pool_path(dir, r);
    if (!fs::exists(path)) throw std::runtime_error("missing round pool file '" + path.string() + "'");
  }
  bool have_eval = true;
  for (std::size_t r = 0; r <= o.rounds; ++r) have_eval = have_eval && fs::exists(round_eval_path(dir, r));

  ParseOptions popts;
  popts.confidence_floor = o.floor;
  const unsigned workers = o.workers ? o.workers : default_workers();
  const Method base = methods.front();

  auto first = load_pool(round_pool_path(dir, 1).string(), popts);
  std::vector<std::string> ids;
  for (const auto& r : first) ids.push_back(r.image_id);
  const auto initial = file.initial_labeled ? *file.initial_labeled : draw_initial(ids, o.init, o.seed);
  if (o.batch * o.rounds > ids.size() - std::min(ids.size(), initial.size())) {
    throw UsageError("budget exceeds pool: batch * rounds must not exceed the unlabeled pool");
  }
  if (o.dry_run) {
    out << "real campaign: pool " << ids.size() << " images, init " << initial.size() << ", batch " << o.batch
        << ", rounds " << o.rounds << (have_eval ? ", with evaluation\n" : ", no evaluation files\n");
    return kExitOk;
  }
  CampaignState state(ids, initial);

  std::optional<std::size_t> num_classes;
  LearningCurve curve{std::string(method_name(base.kind)), {}};
  std::vector<std::optional<double>> final_ap;
  const auto evaluate = [&](std::size_t round) {
    if (!have_eval) return;
    const auto records = load_pool(round_eval_path(dir, round).string(), popts);
    if (!num_classes) {
      for (const auto& r : records) {
        if (!r.reference.empty()) num_classes = r.reference.front().dist.probs.size();
      }
    }
    const auto match = match_records(records, num_classes.value_or(1));
    final_ap = per_class_ap(match);
    curve.points.push_back({static_cast<double>(state.labeled().size()), mean_ap(final_ap).value_or(0.0)});
  };
  evaluate(0);

  for (std::size_t r = 1; r <= o.rounds; ++r) {
    auto pool = r == 1 ? first : load_pool(round_pool_path(dir, r).string(), popts);
    std::vector<ImageRecord> unlabeled;
    for (auto& rec : pool) {
      if (state.unlabeled().contains(rec.image_id)) unlabeled.push_back(std::move(rec));
    }
    if (unlabeled.size() != state.unlabeled().size()) {
      throw std::runtime_error("round pool '" + round_pool_path(dir, r).string() +
                               "' does not cover every unlabeled image");
    }
    Method m = base;
    m.seed = sim::mix_seed(base.seed, r);
    const auto scores = score_pool(m, unlabeled, workers);
    detail::warn_undefined(err, scores, std::string(method_name(m.kind)));
    state.select_round(scores, o.batch, o.undefined_first ? UndefinedPlacement::kFirst : UndefinedPlacement::kLast);
    evaluate(r);
  }

  fs::create_directories(o.out);
  {
    auto hist = detail::open_out(fs::path(o.out) / "history.jsonl");
    write_history(hist, state.history());
  }
  if (have_eval) {
    auto curves = detail::open_out(fs::path(o.out) / "curves.csv");
    write_curves(curves, std::vector<LearningCurve>{curve});
    auto aps = detail::open_out(fs::path(o.out) / "class_ap.csv");
    write_class_aps(aps, std::vector<ClassAps>{{curve.method, final_ap}});
  } else {
    err << "warning: no eval.round{n}.jsonl files for every round in '" << dir.string()
        << "'; learning curve not written\n";
  }
  return kExitOk;
}

inline int run_campaign(CampaignOptions o, const CLI::App& cmd, std::ostream& out, std::ostream& err) {
  if (o.pool_dir.empty() == o.sim_config.empty()) throw UsageError("campaign needs exactly one of --pool or --sim-config");
  CampaignFile file;
  if (!o.config.empty()) {
    const auto j = detail::load_json(o.config);
    if (!j.is_object()) throw std::runtime_error("campaign config must be a JSON object");
    try {
      const auto given = [&](const char* flag) { return cmd.count(flag) > 0; };
      if (!given("--method") && j.contains("method")) {
        o.methods = j["method"].is_array() ? j["method"].get<std::vector<std::string>>()
                                           : std::vector<std::string>{j["method"].get<std::string>()};
      }
      if (!given("--batch")) o.batch = j.value("batch", o.batch);
      if (!given("--rounds")) o.rounds = j.value("rounds", o.rounds);
      if (!given("--init")) o.init = j.value("init", o.init);
      if (!given("--seed")) o.seed = j.value("seed", o.seed);
      if (!given("--trials")) o.trials = j.value("trials", o.trials);
      if (!given("--lambda")) o.method.lambda = j.value("lambda", o.method.lambda);
      if (!given("--lambda-ls")) o.method.lambda_ls = j.value("lambda_ls", o.method.lambda_ls);
      if (!given("--lambda-lt")) o.method.lambda_lt = j.value("lambda_lt", o.method.lambda_lt);
      if (j.contains("initial_labeled")) file.initial_labeled = j["initial_labeled"].get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("invalid campaign config '" + o.config + "': " + e.what());
    }
  }
  if (o.methods.empty()) throw UsageError("campaign needs --method (or \"method\" in --config)");
  if (o.batch == 0 && o.rounds > 0) throw UsageError("--batch must be positive");
  if (o.trials == 0) throw UsageError("--trials must be positive");
  std::vector<Method> methods;
  for (const auto& name : o.methods) {
    MethodFlags f = o.method;
    f.seed = o.seed;
    methods.push_back(resolve_method(name, f));
  }
  if (!o.sim_config.empty()) return run_campaign_sim(o, methods, out, err);
  return run_campaign_real(o, file, methods, out, err);
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateOptions {
  std::string config;
  std::string out;
  std::size_t init = 0;
  std::uint64_t seed = 1;
  bool all = false;
  bool no_proposals = false;
  bool no_noise = false;
  bool test_split = false;
  unsigned workers = 0;
};

inline int run_simulate(const SimulateOptions& o) {
  sim::ExperimentConfig cfg;
  try {
    cfg = sim::experiment_from_json(detail::load_json(o.config));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("invalid simulation config: " + std::string(e.what()));
  }
  sim::validate(cfg.world);
  const sim::World world = sim::generate_world(cfg.world);
  std::vector<std::string> ids;
  for (const auto& img : world) ids.push_back(img.image_id);
  if (o.init > ids.size()) throw UsageError("--init exceeds the world size");
  const auto initial = sim::mix_seed(o.seed, "initial");
  const auto labeled = draw_initial(ids, o.init, initial);

  sim::DetectorState state(sim::difficulties(cfg.world), cfg.calibration);
  std::vector<const sim::WorldImage*> train;
  std::set<std::string> labeled_set(labeled.begin(), labeled.end());
  for (const auto& img : world) {
    if (labeled_set.contains(img.image_id)) train.push_back(&img);
  }
  state.train_update(std::span<const sim::WorldImage* const>(train));

  sim::World test;
  if (o.test_split) test = sim::generate_world(sim::test_world_config(cfg));
  const sim::World& source = o.test_split ? test : world;
  std::vector<const sim::WorldImage*> emit;
  for (const auto& img : source) {
    if (o.all || o.test_split || !labeled_set.contains(img.image_id)) emit.push_back(&img);
  }
  sim::SimulationOptions sopts;
  sopts.sigmas = cfg.sigmas;
  sopts.with_proposals = cfg.with_proposals && !o.no_proposals;
  sopts.with_noise = !o.no_noise && !cfg.sigmas.empty();
  const auto records = sim::simulate_pool(state, emit, sim::mix_seed(o.seed, "pool"), sopts,
                                          o.workers ? o.workers : default_workers());
  auto out = detail::open_out(o.out);
  write_pool(out, records);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
  std::string pool;
  std::string out;
  std::string label = "eval";
  std::string classes;
  std::string variant = "prefix";
  double iou = kDefaultMatchIou;
  double floor = kDefaultConfidenceFloor;
};

inline ApVariant parse_variant(const std::string& v) {
  if (v == "prefix") return ApVariant::kPrefixPrecision;
  if (v == "all-point") return ApVariant::kAllPointInterpolated;
  throw UsageError("unknown AP variant '" + v + "' (expected prefix or all-point)");
}

inline int run_eval(const EvalOptions& o, std::ostream& out) {
  const ApVariant variant = parse_variant(o.variant);
  if (!(o.iou > 0.0 && o.iou < 1.0)) throw UsageError("--iou must lie in (0,1)");
  ParseOptions popts;
  popts.confidence_floor = o.floor;
  std::vector<std::string> names;
  if (!o.classes.empty()) {
    names = load_class_manifest(o.classes);
    popts.num_classes = names.size();
  }
  const auto records = load_pool(o.pool, popts);
  std::size_t k = names.size();
  if (k == 0) {
    for (const auto& r : records) {
      if (!r.reference.empty()) k = std::max(k, r.reference.front().dist.probs.size());
      if (r.ground_truth) {
        for (const auto& g : *r.ground_truth) k = std::max(k, static_cast<std::size_t>(g.class_index) + 1);
      }
    }
  }
  if (k == 0) throw std::runtime_error("pool has neither detections nor ground truth to evaluate");
  const auto match = match_records(records, k, o.iou);
  const auto aps = per_class_ap(match, variant);
  auto file = detail::open_out(o.out);
  write_class_aps(file, std::vector<ClassAps>{{o.label, aps}});
  const auto map = mean_ap(aps);
  out << "mAP@" << csv::fixed6(o.iou) << " " << (map ? csv::fixed6(*map) : "nan") << '\n';
  for (std::size_t c = 0; c < aps.size(); ++c) {
    out << "  " << (c < names.size() ? names[c] : "class" + std::to_string(c)) << " "
        << (aps[c] ? csv::fixed6(*aps[c]) : "nan") << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// overlap

struct OverlapOptions {
  std::vector<std::string> histories;
  std::string out;
  int round = 0;
};

inline int run_overlap(const OverlapOptions& o) {
  std::vector<std::string> labels;
  std::vector<std::vector<RoundRecord>> histories;
  for (const auto& path : o.histories) {
    for (auto& r : load_history(path)) {
      auto it = std::find(labels.begin(), labels.end(), r.method);
      if (it == labels.end()) {
        labels.push_back(r.method);
        histories.emplace_back();
        it = std::prev(labels.end());
      }
      histories[static_cast<std::size_t>(it - labels.begin())].push_back(std::move(r));
    }
  }
  if (labels.empty()) throw std::runtime_error("no history rounds found");
  const auto matrix = overlap_matrix(histories, labels, o.round > 0 ? std::optional<int>(o.round) : std::nullopt);
  auto out = detail::open_out(o.out);
  std::vector<std::string> header{"method"};
  header.insert(header.end(), labels.begin(), labels.end());
  csv::write_row(out, header);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::vector<std::string> row{labels[i]};
    for (double v : matrix.percent[i]) row.push_back(csv::fixed6(v));
    csv::write_row(out, row);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// report

struct ReportOptions {
  std::vector<std::string> curves;
  std::string baseline;
  std::string out;
  std::string class_ap;
  std::string reference;
  double difficult_threshold = kDifficultApThreshold;
};

inline int run_report(const ReportOptions& o, std::ostream& out) {
  std::vector<LearningCurve> curves;
  for (const auto& path : o.curves) {
    auto in = detail::open_in(path);
    std::vector<LearningCurve> loaded;
    try {
      loaded = read_curves(in);
    } catch (const csv::ParseError& e) {
      throw std::runtime_error("'" + path + "': " + e.what());
    }
    for (auto& c : loaded) {
      if (std::any_of(curves.begin(), curves.end(), [&](const LearningCurve& x) { return x.method == c.method; })) {
        throw std::runtime_error("curve '" + c.method + "' given more than once");
      }
      curves.push_back(std::move(c));
    }
  }
  const auto base = std::find_if(curves.begin(), curves.end(), [&](const auto& c) { return c.method == o.baseline; });
  if (base == curves.end()) throw std::runtime_error("baseline curve '" + o.baseline + "' not found");

  fs::create_directories(o.out);
  auto saving = detail::open_out(fs::path(o.out) / "saving.csv");
  auto summary = detail::open_out(fs::path(o.out) / "saving_summary.csv");
  csv::write_row(saving, {"method", "labels", "saving", "reached"});
  csv::write_row(summary, {"method", "average_saving", "flagged"});
  std::vector<svg::Series> map_series, saving_series;
  for (const auto& c : curves) {
    svg::Series ms{c.method, {}};
    for (const auto& p : c.points) ms.points.emplace_back(p.labels, p.map);
    map_series.push_back(std::move(ms));
    const auto rep = relative_saving(*base, c);
    svg::Series ss{c.method, {}};
    for (const auto& p : rep.points) {
      csv::write_row(saving, {c.method, format_labels(p.labels), p.saving ? csv::fixed6(*p.saving) : "nan",
                              p.saving ? "true" : "false"});
      if (p.saving) ss.points.emplace_back(p.labels, *p.saving);
    }
    saving_series.push_back(std::move(ss));
    csv::write_row(summary, {c.method, rep.average ? csv::fixed6(*rep.average) : "nan", rep.flagged ? "true" : "false"});
    out << c.method << ": average saving " << (rep.average ? csv::fixed6(*rep.average) : "nan")
        << (rep.flagged ? " (flagged)" : "") << '\n';
  }
  {
    auto f = detail::open_out(fs::path(o.out) / "map.svg");
    f << svg::line_chart("Mean average precision", "labeled images", "mAP", map_series);
  }
  {
    auto f = detail::open_out(fs::path(o.out) / "saving.svg");
    f << svg::line_chart("Relative saving vs " + o.baseline, "labeled images (" + o.baseline + ")", "saving",
                         saving_series);
  }

  if (!o.class_ap.empty()) {
    auto in = detail::open_in(o.class_ap);
    std::vector<ClassAps> sets;
    try {
      sets = read_class_aps(in);
    } catch (const csv::ParseError& e) {
      throw std::runtime_error("'" + o.class_ap + "': " + e.what());
    }
    const auto find = [&](const std::string& name) -> const ClassAps& {
      auto it = std::find_if(sets.begin(), sets.end(), [&](const ClassAps& s) { return s.method == name; });
      if (it == sets.end()) throw std::runtime_error("per-class APs for '" + name + "' not found");
      return *it;
    };
    const ClassAps& passive = find(o.baseline);
    const ClassAps& reference = find(o.reference.empty() ? o.baseline : o.reference);
    auto f = detail::open_out(fs::path(o.out) / "classwise.csv");
    csv::write_row(f, {"method", "versus", "group", "classes", "mean_delta"});
    for (const auto& s : sets) {
      auto method_ap = s.ap;
      auto passive_ap = passive.ap;
      auto reference_ap = reference.ap;
      const std::size_t k = std::max({method_ap.size(), passive_ap.size(), reference_ap.size()});
      method_ap.resize(k);
      passive_ap.resize(k);
      reference_ap.resize(k);
      const auto rep = classwise_report(passive_ap, reference_ap, method_ap, o.difficult_threshold);
      const auto join = [](const std::vector<std::size_t>& v) {
        std::string s;
        for (std::size_t c : v) s += (s.empty() ? "" : " ") + std::to_string(c);
        return s;
      };
      const auto val = [](const std::optional<double>& v) { return v ? csv::fixed6(*v) : std::string("nan"); };
      csv::write_row(f, {s.method, reference.method, "difficult", join(rep.difficult), val(rep.difficult_delta)});
      csv::write_row(f, {s.method, reference.method, "non_difficult", join(rep.non_difficult),
                         val(rep.non_difficult_delta)});
      csv::write_row(f, {s.method, reference.method, "all", "", val(rep.overall_delta)});
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// entry point

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Active learning for object detection: score, select, simulate, and evaluate.", "alod"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  ScoreOptions score;
  auto* score_cmd = app.add_subcommand("score", "Score every image of a pool under one method");
  score_cmd->add_option("--pool", score.pool, "Pool JSONL file")->required();
  score_cmd->add_option("--method", score.method.name,
                        "Method: r, c, ls, ls_c, lt_c, lt_c_gt, 3in1, lt_minabs_diff, lt_wsum_j, lt_wsum_t")
      ->required();
  score_cmd->add_option("--lambda", score.method.lambda, "Stability weight for LS+C")->capture_default_str();
  score_cmd->add_option("--lambda-ls", score.method.lambda_ls, "Stability weight for 3in1")->capture_default_str();
  score_cmd->add_option("--lambda-lt", score.method.lambda_lt, "Tightness weight for 3in1")->capture_default_str();
  score_cmd->add_option("--seed", score.method.seed, "Seed for the random method")->capture_default_str();
  score_cmd->add_option("--floor", score.floor, "Drop detections with P_max below this")->capture_default_str();
  score_cmd->add_option("--classes", score.classes, "Class-name manifest (JSON array) to check K against");
  score_cmd->add_option("--workers", score.workers, "Worker threads (default: $ALOD_WORKERS or 1)");
  score_cmd->add_option("--out", score.out, "Output scores CSV")->required();

  SelectOptions select;
  auto* select_cmd = app.add_subcommand("select", "Pick the top-ranked batch from a scores CSV");
  select_cmd->add_option("--scores", select.scores, "Scores CSV from `score`")->required();
  select_cmd->add_option("--batch", select.batch, "Number of images to select")->required();
  select_cmd->add_option("--labeled", select.labeled, "File of already-labeled ids, one per line");
  select_cmd->add_flag("--undefined-first", select.undefined_first, "Rank undefined scores before defined ones");
  select_cmd->add_option("--history", select.history, "Append the round to this history JSONL");
  select_cmd->add_option("--round", select.round, "Round number recorded in the history")->capture_default_str();
  select_cmd->add_option("--out", select.out, "Output file of selected ids, one per line")->required();

  CampaignOptions campaign;
  auto* campaign_cmd = app.add_subcommand("campaign", "Run multi-round selection on real or simulated pools");
  campaign_cmd->add_option("--pool", campaign.pool_dir, "Directory holding pool.round{n}.jsonl (real mode)");
  campaign_cmd->add_option("--sim-config", campaign.sim_config, "Simulation config JSON (simulation mode)");
  campaign_cmd->add_option("--config", campaign.config, "Campaign config JSON; explicit flags take precedence");
  campaign_cmd->add_option("--method", campaign.methods, "Method name; repeat to compare several (simulation mode)");
  campaign_cmd->add_option("--batch", campaign.batch, "Images selected per round")->capture_default_str();
  campaign_cmd->add_option("--rounds", campaign.rounds, "Number of rounds")->capture_default_str();
  campaign_cmd->add_option("--init", campaign.init, "Size of the initial labeled set")->capture_default_str();
  campaign_cmd->add_option("--seed", campaign.seed, "Campaign seed")->capture_default_str();
  campaign_cmd->add_option("--trials", campaign.trials, "Simulation trials with seeds seed..seed+trials-1")
      ->capture_default_str();
  campaign_cmd->add_option("--lambda", campaign.method.lambda, "Stability weight for LS+C")->capture_default_str();
  campaign_cmd->add_option("--lambda-ls", campaign.method.lambda_ls, "Stability weight for 3in1")
      ->capture_default_str();
  campaign_cmd->add_option("--lambda-lt", campaign.method.lambda_lt, "Tightness weight for 3in1")
      ->capture_default_str();
  campaign_cmd->add_option("--floor", campaign.floor, "Confidence floor for real pools")->capture_default_str();
  campaign_cmd->add_option("--workers", campaign.workers, "Worker threads (default: $ALOD_WORKERS or 1)");
  campaign_cmd->add_flag("--undefined-first", campaign.undefined_first, "Rank undefined scores first");
  campaign_cmd->add_flag("--dry-run", campaign.dry_run, "Validate the configuration and exit");
  campaign_cmd->add_option("--out", campaign.out, "Output directory")->required();

  SimulateOptions simulate;
  auto* simulate_cmd = app.add_subcommand("simulate", "Emit a synthetic pool JSONL from a simulation config");
  simulate_cmd->add_option("--config", simulate.config, "Simulation config JSON")->required();
  simulate_cmd->add_option("--init", simulate.init, "Images the detector was trained on")->capture_default_str();
  simulate_cmd->add_option("--seed", simulate.seed, "Seed for the training draw and detections")
      ->capture_default_str();
  simulate_cmd->add_flag("--all", simulate.all, "Also emit records for the training images");
  simulate_cmd->add_flag("--test-split", simulate.test_split, "Emit the held-out evaluation split instead");
  simulate_cmd->add_flag("--no-proposals", simulate.no_proposals, "Single-shot detector: no proposal links");
  simulate_cmd->add_flag("--no-noise", simulate.no_noise, "Skip the noisy passes");
  simulate_cmd->add_option("--workers", simulate.workers, "Worker threads (default: $ALOD_WORKERS or 1)");
  simulate_cmd->add_option("--out", simulate.out, "Output pool JSONL")->required();

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "Per-class AP and mAP of a pool's reference detections");
  eval_cmd->add_option("--pool", eval.pool, "Pool JSONL with ground truth")->required();
  eval_cmd->add_option("--iou", eval.iou, "IoU threshold for a true positive")->capture_default_str();
  eval_cmd->add_option("--ap", eval.variant, "AP variant: prefix or all-point")->capture_default_str();
  eval_cmd->add_option("--label", eval.label, "Method label written to the CSV")->capture_default_str();
  eval_cmd->add_option("--classes", eval.classes, "Class-name manifest (JSON array)");
  eval_cmd->add_option("--floor", eval.floor, "Confidence floor")->capture_default_str();
  eval_cmd->add_option("--out", eval.out, "Per-class AP CSV")->required();

  OverlapOptions overlap;
  auto* overlap_cmd = app.add_subcommand("overlap", "Pairwise overlap of selections between methods");
  overlap_cmd->add_option("--history", overlap.histories, "History JSONL files")->required();
  overlap_cmd->add_option("--round", overlap.round, "Only this round (default: mean over shared rounds)");
  overlap_cmd->add_option("--out", overlap.out, "Overlap matrix CSV (percent)")->required();

  ReportOptions report;
  auto* report_cmd = app.add_subcommand("report", "Relative saving, charts, and difficult-class analysis");
  report_cmd->add_option("--curves", report.curves, "Curve CSV files (method,labels,map)")->required();
  report_cmd->add_option("--baseline", report.baseline, "Passive-learning curve name, e.g. R")->required();
  report_cmd->add_option("--class-ap", report.class_ap, "Per-class AP CSV for the difficult-class report");
  report_cmd->add_option("--versus", report.reference, "Method the classwise deltas compare against")
      ->capture_default_str();
  report_cmd->add_option("--difficult-below", report.difficult_threshold, "Passive AP below this is difficult")
      ->capture_default_str();
  report_cmd->add_option("--out", report.out, "Output directory")->required();

  std::vector<const char*> argv{"alod"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*score_cmd) return run_score(score, err);
    if (*select_cmd) return run_select(select);
    if (*campaign_cmd) return run_campaign(campaign, *campaign_cmd, out, err);
    if (*simulate_cmd) return run_simulate(simulate);
    if (*eval_cmd) return run_eval(eval, out);
    if (*overlap_cmd) return run_overlap(overlap);
    if (*report_cmd) return run_report(report, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace alod::cli
