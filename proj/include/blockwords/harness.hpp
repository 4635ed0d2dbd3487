#pragma once

// Experiment runner: builds models for scenarios, runs exact inference, the
// particle filter and the proposal-only baseline under the trial protocol,
// records snapshots, costs and timings, and ranks parameter grids.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "blockwords/error.hpp"
#include "blockwords/humans.hpp"
#include "blockwords/inference.hpp"
#include "blockwords/lexicon.hpp"
#include "blockwords/metrics.hpp"
#include "blockwords/ngram.hpp"
#include "blockwords/scenario.hpp"
#include "json.hpp"

namespace blockwords {

enum class Method : std::uint8_t { Exact, Sips, ProposalOnly };

inline std::string_view to_string(Method m) noexcept {
  switch (m) {
    case Method::Exact: return "exact";
    case Method::Sips: return "sips";
    case Method::ProposalOnly: return "proposal_only";
  }
  return "?";
}

inline std::optional<Method> parse_method(std::string_view s) noexcept {
  if (s == "exact") return Method::Exact;
  if (s == "sips") return Method::Sips;
  if (s == "proposal_only" || s == "proposal-only") return Method::ProposalOnly;
  return std::nullopt;
}

inline std::string_view to_string(ProposalOnlyWeighting w) noexcept {
  return w == ProposalOnlyWeighting::Counts ? "counts" : "importance";
}

/// Everything that determines a run besides the scenario and the seed.
struct RunParams {
  Method method = Method::Sips;
  std::size_t n_particles = 2;
  PlannerParams planner;
  ProposalStrategy proposal = ProposalStrategy::LastAndNext;
  ProposalWeighting weighting = ProposalWeighting::Marginal;
  ProposalOnlyWeighting proposal_only_weighting = ProposalOnlyWeighting::Counts;
  double tw = 4.0;        // prior and n-gram temperature
  double epsilon = 0.05;  // n-gram termination bias
};

/// Trials per configuration: one for exact inference, max(10, 200/N) otherwise.
inline std::size_t protocol_trials(const RunParams& p) {
  if (p.method == Method::Exact) return 1;
  return std::max<std::size_t>(10, 200 / std::max<std::size_t>(p.n_particles, 1));
}

inline nlohmann::ordered_json to_json(const RunParams& p) {
  return {{"method", to_string(p.method)},
          {"n_particles", p.n_particles},
          {"beta", p.planner.beta},
          {"budget", p.planner.budget},
          {"cadence", p.planner.cadence},
          {"strategy", to_string(p.planner.strategy)},
          {"proposal", to_string(p.proposal)},
          {"weighting", to_string(p.weighting)},
          {"proposal_only_weighting", to_string(p.proposal_only_weighting)},
          {"tw", p.tw},
          {"epsilon", p.epsilon}};
}

/// Missing fields keep their defaults.
inline RunParams run_params_from_json(const nlohmann::json& j, RunParams p = {}) {
  auto enum_field = [&](const char* key, auto parse, auto& out) {
    if (!j.contains(key)) return;
    auto v = parse(j.at(key).get<std::string>());
    if (!v) throw InvalidArgument(std::string(key) + ": unknown value \"" + j.at(key).get<std::string>() + "\"");
    out = *v;
  };
  try {
    enum_field("method", parse_method, p.method);
    enum_field("strategy", parse_strategy, p.planner.strategy);
    enum_field("proposal", parse_proposal_strategy, p.proposal);
    enum_field("weighting", parse_weighting, p.weighting);
    enum_field("proposal_only_weighting", parse_proposal_only_weighting, p.proposal_only_weighting);
    p.n_particles = j.value("n_particles", p.n_particles);
    p.planner.beta = j.value("beta", p.planner.beta);
    p.planner.budget = j.value("budget", p.planner.budget);
    p.planner.cadence = j.value("cadence", p.planner.cadence);
    p.tw = j.value("tw", p.tw);
    p.epsilon = j.value("epsilon", p.epsilon);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("parameters: ") + e.what());
  }
  return p;
}

inline void validate(const RunParams& p) {
  if (p.n_particles < 1) throw InvalidArgument("n_particles must be >= 1");
  if (!(p.planner.beta > 0.0)) throw InvalidArgument("beta must be positive");
  if (p.planner.budget < 0) throw InvalidArgument("budget must be >= 0");
  if (p.planner.cadence < 1) throw InvalidArgument("cadence must be >= 1");
  if (!(p.tw > 0.0)) throw InvalidArgument("tw must be positive");
  if (!(p.epsilon >= 0.0 && p.epsilon < 1.0)) throw InvalidArgument("epsilon must be in [0, 1)");
}

/// The dictionary plus n-gram models trained on demand, one per
/// (temperature, termination bias). Safe to share between threads.
class Engine {
 public:
  explicit Engine(Lexicon lexicon) : lexicon_(std::move(lexicon)) {}

  static Engine from_file(const std::filesystem::path& words) { return Engine(Lexicon::load(words)); }

  const Lexicon& lexicon() const noexcept { return lexicon_; }

  std::shared_ptr<const CharNGram> ngram(double tw, double epsilon) const {
    std::lock_guard lock(mu_);
    auto key = std::make_pair(tw, epsilon);
    auto it = ngrams_.find(key);
    if (it == ngrams_.end())
      it = ngrams_.emplace(key, std::make_shared<const CharNGram>(train_ngram(lexicon_, 5, tw, epsilon))).first;
    return it->second;
  }

  /// Installs a prebuilt n-gram for its (tw, epsilon) pair.
  void set_ngram(double tw, std::shared_ptr<const CharNGram> model) {
    std::lock_guard lock(mu_);
    ngrams_[{tw, model->epsilon()}] = std::move(model);
  }

  InferenceModel model(const Scenario& s, const RunParams& p) const {
    return make_model(lexicon_, ngram(p.tw, p.epsilon), s.blocks, p.tw, p.planner, p.proposal);
  }

 private:
  Lexicon lexicon_;
  mutable std::mutex mu_;
  mutable std::map<std::pair<double, double>, std::shared_ptr<const CharNGram>> ngrams_;
};

struct RunRecord {
  std::string scenario;
  RunParams params;
  std::uint64_t seed = 0;
  std::size_t trial = 0;
  std::vector<PosteriorSnapshot> snapshots;  // one per judgment point
  double seconds_per_action = 0.0;
  std::string error;  // empty on success

  bool ok() const noexcept { return error.empty(); }
  CostLedger ledger() const { return CostLedger::of(snapshots); }
};

/// Runs one method on one scenario. Every method consumes the trace one
/// action at a time up to the last judgment point, so timings are
/// comparable per action; snapshots are kept only at judgment points.
inline RunRecord run_one(const Engine& engine, const Scenario& scenario, const RunParams& params, std::uint64_t seed,
                         std::size_t trial = 0) {
  RunRecord r;
  r.scenario = scenario.id;
  r.params = params;
  r.seed = seed;
  r.trial = trial;
  try {
    validate(params);
    const InferenceModel model = engine.model(scenario, params);
    const ObservedTrace trace = scenario.trace();
    const std::size_t last = scenario.judgments.empty() ? 0 : scenario.judgments.back();
    std::size_t next = 0;
    auto want = [&](std::size_t t) { return next < scenario.judgments.size() && scenario.judgments[next] == t; };
    const auto start = std::chrono::steady_clock::now();
    switch (params.method) {
      case Method::Exact: {
        ExactTracker tracker(model, trace.initial());
        for (std::size_t t = 0; t <= last; ++t) {
          if (t > 0) tracker.step(trace.actions()[t - 1]);
          if (want(t)) {
            r.snapshots.push_back(tracker.snapshot());
            ++next;
          }
        }
        break;
      }
      case Method::Sips: {
        SipsFilter filter(model, {params.n_particles, params.weighting}, seed, trace.initial());
        for (std::size_t t = 0; t <= last; ++t) {
          if (t > 0) filter.step(trace.actions()[t - 1]);
          if (want(t)) {
            r.snapshots.push_back(filter.snapshot());
            ++next;
          }
        }
        break;
      }
      case Method::ProposalOnly: {
        for (std::size_t t = 0; t <= last; ++t) {
          auto snap = proposal_only_snapshot(model, trace, t, params.n_particles, seed, params.proposal_only_weighting);
          if (want(t)) {
            r.snapshots.push_back(std::move(snap));
            ++next;
          }
        }
        break;
      }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    r.seconds_per_action = last > 0 ? secs / static_cast<double>(last) : secs;
  } catch (const std::exception& e) {
    r.error = e.what();
    r.snapshots.clear();
  }
  return r;
}

struct ExperimentOptions {
  std::uint64_t base_seed = 0;
  std::optional<std::size_t> trials;  // overrides the protocol when set
  std::size_t threads = 1;
};

/// Seed of trial k under `base`; independent of scheduling.
inline std::uint64_t trial_seed(std::uint64_t base, std::size_t trial) { return mix64(base, trial); }

/// Full product scenarios x params x trials, in that nesting order. Run
/// failures are recorded on the record and do not stop the experiment.
inline std::vector<RunRecord> run_experiment(const Engine& engine, const std::vector<Scenario>& scenarios,
                                             const std::vector<RunParams>& params, const ExperimentOptions& opt = {}) {
  struct Job {
    const Scenario* scenario;
    const RunParams* params;
    std::size_t trial;
  };
  std::vector<Job> jobs;
  for (const auto& s : scenarios)
    for (const auto& p : params) {
      const std::size_t m = opt.trials ? *opt.trials : protocol_trials(p);
      for (std::size_t k = 0; k < m; ++k) jobs.push_back({&s, &p, k});
    }
  std::vector<RunRecord> out(jobs.size());
  std::atomic<std::size_t> cursor{0};
  auto worker = [&] {
    for (std::size_t i; (i = cursor.fetch_add(1)) < jobs.size();)
      out[i] = run_one(engine, *jobs[i].scenario, *jobs[i].params, trial_seed(opt.base_seed, jobs[i].trial),
                       jobs[i].trial);
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(opt.threads, jobs.size()));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Record files
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const PosteriorSnapshot& s) {
  nlohmann::ordered_json probs = nlohmann::ordered_json::object();
  for (const auto& [w, p] : s.probs) probs[w] = p;
  return {{"step", s.step},
          {"unique_hypotheses", s.unique_hypotheses},
          {"evaluations", s.evaluations},
          {"degenerate", s.degenerate},
          {"probs", probs}};
}

inline PosteriorSnapshot snapshot_from_json(const nlohmann::json& j) {
  PosteriorSnapshot s;
  s.step = j.at("step").get<std::size_t>();
  s.unique_hypotheses = j.at("unique_hypotheses").get<std::size_t>();
  s.evaluations = j.at("evaluations").get<std::size_t>();
  s.degenerate = j.at("degenerate").get<bool>();
  for (const auto& [w, p] : j.at("probs").items()) s.probs.emplace(w, p.get<double>());
  return s;
}

inline nlohmann::ordered_json to_json(const RunRecord& r) {
  nlohmann::ordered_json snaps = nlohmann::ordered_json::array();
  for (const auto& s : r.snapshots) snaps.push_back(to_json(s));
  return {{"v", 1},
          {"scenario", r.scenario},
          {"params", to_json(r.params)},
          {"seed", r.seed},
          {"trial", r.trial},
          {"seconds_per_action", r.seconds_per_action},
          {"error", r.error.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(r.error)},
          {"snapshots", snaps}};
}

inline RunRecord run_record_from_json(const nlohmann::json& j) {
  try {
    RunRecord r;
    r.scenario = j.at("scenario").get<std::string>();
    r.params = run_params_from_json(j.at("params"));
    r.seed = j.at("seed").get<std::uint64_t>();
    r.trial = j.at("trial").get<std::size_t>();
    r.seconds_per_action = j.at("seconds_per_action").get<double>();
    if (!j.at("error").is_null()) r.error = j.at("error").get<std::string>();
    for (const auto& s : j.at("snapshots")) r.snapshots.push_back(snapshot_from_json(s));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("run record: ") + e.what());
  }
}

/// One JSON record per line.
inline void save_records(const std::vector<RunRecord>& records, const std::filesystem::path& path) {
  std::string text;
  for (const auto& r : records) text += to_json(r).dump() + "\n";
  write_file_atomic(path, text);
}

inline std::vector<RunRecord> load_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  std::vector<RunRecord> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    try {
      out.push_back(run_record_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw ParseError(path.string(), n, e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Objectives and grid search
// ---------------------------------------------------------------------------

enum class Objective : std::uint8_t { Accuracy, IouVsHumans };

inline std::string_view to_string(Objective o) noexcept {
  return o == Objective::Accuracy ? "accuracy" : "iou_vs_humans";
}

inline std::optional<Objective> parse_objective(std::string_view s) noexcept {
  if (s == "accuracy") return Objective::Accuracy;
  if (s == "iou_vs_humans") return Objective::IouVsHumans;
  return std::nullopt;
}

/// Mean true-goal probability over every judgment point of every
/// successful record.
inline double mean_accuracy(const std::vector<RunRecord>& records, const std::vector<Scenario>& scenarios) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& r : records) {
    if (!r.ok()) continue;
    auto sc = std::find_if(scenarios.begin(), scenarios.end(), [&](const Scenario& s) { return s.id == r.scenario; });
    if (sc == scenarios.end()) throw InvalidArgument("record for unknown scenario \"" + r.scenario + "\"");
    for (const auto& s : r.snapshots) {
      total += accuracy(s, sc->true_word);
      ++n;
    }
  }
  return n ? total / static_cast<double>(n) : 0.0;
}

/// Mean IoU between the averaged human distribution and each record's
/// snapshot, over judgment points where both are non-empty.
inline double mean_iou(const std::vector<RunRecord>& records, const std::vector<Scenario>& scenarios,
                       const HumanData& humans) {
  std::map<std::string, std::vector<Distribution>> human;
  for (const auto& s : scenarios)
    if (const auto* rs = humans.find(s.id)) human[s.id] = average_human_distributions(*rs, s.judgments.size());
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& r : records) {
    if (!r.ok() || !human.count(r.scenario)) continue;
    const auto& h = human.at(r.scenario);
    for (std::size_t j = 0; j < r.snapshots.size() && j < h.size(); ++j)
      if (auto v = iou(h[j], r.snapshots[j].probs); v && !h[j].empty() && !r.snapshots[j].probs.empty()) {
        total += *v;
        ++n;
      }
  }
  return n ? total / static_cast<double>(n) : 0.0;
}

/// Lists of values per parameter; unlisted parameters keep the base value.
struct GridSpec {
  RunParams base;
  std::vector<double> beta, tw, epsilon;
  std::vector<int> budget, cadence;
  std::vector<SearchStrategy> strategy;
  std::vector<ProposalStrategy> proposal;
  std::vector<std::size_t> n_particles;

  /// Ranges used for the original fits.
  static GridSpec generative_defaults() {
    GridSpec g;
    g.base.method = Method::Exact;
    g.tw = {1, 2, 4, 8, 16};
    g.beta = {0.25, 0.5, 1, 2, 4};
    g.budget = {5, 10, 20, 50, 100, 200, 500};
    g.cadence = {1, 2};
    g.strategy = {SearchStrategy::AStar, SearchStrategy::BFS};
    return g;
  }

  static GridSpec inference_defaults() {
    GridSpec g;
    g.base.method = Method::Sips;
    g.tw = {1, 2, 4, 8, 16};
    g.epsilon = {0, 0.05, 0.1, 0.15, 0.2, 0.25};
    g.proposal = {ProposalStrategy::LastAndNext, ProposalStrategy::LastTower, ProposalStrategy::NextTower,
                  ProposalStrategy::AnyTower};
    g.n_particles = {2, 5, 10, 20, 50};
    return g;
  }

  std::vector<RunParams> expand() const {
    std::vector<RunParams> out{base};
    auto axis = [&](const auto& values, auto set) {
      if (values.empty()) return;
      std::vector<RunParams> next;
      for (const auto& p : out)
        for (const auto& v : values) {
          RunParams q = p;
          set(q, v);
          next.push_back(q);
        }
      out = std::move(next);
    };
    axis(tw, [](RunParams& p, double v) { p.tw = v; });
    axis(beta, [](RunParams& p, double v) { p.planner.beta = v; });
    axis(budget, [](RunParams& p, int v) { p.planner.budget = v; });
    axis(cadence, [](RunParams& p, int v) { p.planner.cadence = v; });
    axis(strategy, [](RunParams& p, SearchStrategy v) { p.planner.strategy = v; });
    axis(epsilon, [](RunParams& p, double v) { p.epsilon = v; });
    axis(proposal, [](RunParams& p, ProposalStrategy v) { p.proposal = v; });
    axis(n_particles, [](RunParams& p, std::size_t v) { p.n_particles = v; });
    return out;
  }
};

inline GridSpec grid_from_json(const nlohmann::json& j) {
  try {
    GridSpec g;
    if (j.contains("base")) g.base = run_params_from_json(j.at("base"));
    const auto& axes = j.at("axes");
    auto parse_list = [&](const char* key, auto parse, auto& out) {
      if (!axes.contains(key)) return;
      for (const auto& v : axes.at(key)) {
        auto x = parse(v.get<std::string>());
        if (!x) throw InvalidArgument(std::string("axes.") + key + ": unknown value \"" + v.get<std::string>() + "\"");
        out.push_back(*x);
      }
    };
    if (axes.contains("beta")) g.beta = axes.at("beta").get<std::vector<double>>();
    if (axes.contains("tw")) g.tw = axes.at("tw").get<std::vector<double>>();
    if (axes.contains("epsilon")) g.epsilon = axes.at("epsilon").get<std::vector<double>>();
    if (axes.contains("budget")) g.budget = axes.at("budget").get<std::vector<int>>();
    if (axes.contains("cadence")) g.cadence = axes.at("cadence").get<std::vector<int>>();
    if (axes.contains("n_particles")) g.n_particles = axes.at("n_particles").get<std::vector<std::size_t>>();
    parse_list("strategy", parse_strategy, g.strategy);
    parse_list("proposal", parse_proposal_strategy, g.proposal);
    for (const auto& [key, v] : axes.items())
      if (!std::set<std::string>{"beta", "tw", "epsilon", "budget", "cadence", "n_particles", "strategy", "proposal"}
               .count(key))
        throw InvalidArgument("axes." + key + ": unknown parameter");
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("grid: ") + e.what());
  }
}

struct GridRow {
  RunParams params;
  double objective = 0.0;
  std::size_t runs = 0;
  std::size_t failures = 0;
  double seconds_per_action = 0.0;  // mean over successful runs
};

/// Evaluates every grid point and sorts by objective, best first; ties keep
/// grid order.
inline std::vector<GridRow> grid_search(const Engine& engine, const std::vector<Scenario>& scenarios,
                                        const GridSpec& grid, Objective objective, const HumanData& humans,
                                        const ExperimentOptions& opt = {}) {
  if (objective == Objective::IouVsHumans && humans.empty())
    throw InvalidArgument("objective iou_vs_humans needs human data");
  std::vector<GridRow> rows;
  for (const auto& p : grid.expand()) {
    auto records = run_experiment(engine, scenarios, {p}, opt);
    GridRow row;
    row.params = p;
    row.runs = records.size();
    double secs = 0.0;
    for (const auto& r : records) {
      if (!r.ok())
        ++row.failures;
      else
        secs += r.seconds_per_action;
    }
    if (row.runs > row.failures) row.seconds_per_action = secs / static_cast<double>(row.runs - row.failures);
    row.objective = objective == Objective::Accuracy ? mean_accuracy(records, scenarios)
                                                     : mean_iou(records, scenarios, humans);
    rows.push_back(row);
  }
  std::stable_sort(rows.begin(), rows.end(), [](const GridRow& a, const GridRow& b) { return a.objective > b.objective; });
  return rows;
}

}  // namespace blockwords
