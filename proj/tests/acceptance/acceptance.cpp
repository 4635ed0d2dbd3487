// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Data comes from the bundled word list and
// scenarios; small-model checks use independent oracles under tests/oracles.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "blockwords.hpp"
#include "oracles/fixtures.hpp"
#include "oracles/posterior.hpp"
#include "oracles/state_space.hpp"

using namespace blockwords;

namespace {

const std::string kData = BLOCKWORDS_DATA_DIR;

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
  if (!ok) ++failures;
}

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

using Dist = std::map<std::string, double>;

double tvd_of(const Dist& p, const Dist& q) {
  Distribution a(p.begin(), p.end()), b(q.begin(), q.end());
  return tvd(a, b);
}

const Lexicon& full_lexicon() {
  static const Lexicon lex = Lexicon::load(kData + "/words.tsv");
  return lex;
}

bool spellable(const std::string& word, const std::string& letters) {
  std::array<int, 26> n{};
  for (char c : letters) ++n[c - 'a'];
  for (char c : word)
    if (--n[c - 'a'] < 0) return false;
  return true;
}

// A small model over at most five blocks and the 30 most frequent bundled
// words spellable from them, with a stacking trace and a judgment at every
// step.
struct Fixture {
  std::string letters;
  std::vector<std::vector<BlockId>> towers;  // top to bottom; empty = all on the table
  std::vector<std::pair<BlockId, BlockId>> stacks;
};

const std::vector<Fixture> kFixtures{
    {"pinkt", {}, {{2, 3}, {1, 2}, {4, 0}}},              // ink, then t onto p
    {"stake", {}, {{3, 4}, {2, 3}, {1, 2}}},              // take built bottom-up
    {"notes", {{1, 2}, {0}, {3}, {4}}, {{1, kNoBlock}, {3, 4}, {2, 3}, {1, 2}}},  // o off t, tes, then o
    {"drain", {}, {{3, 4}, {2, 3}, {1, 2}}},              // rain
    {"cream", {{4, 3}, {0}, {1, 2}}, {{4, kNoBlock}, {3, 4}, {1, kNoBlock}, {2, 3}, {1, 2}}},  // ream
};

struct FixtureRun {
  Dist freqs;
  std::unique_ptr<fixtures::Small> model;
  WorldState s0;
  std::vector<Action> actions;
  std::vector<std::size_t> steps;
};

FixtureRun build(const Fixture& fx) {
  std::vector<LexiconEntry> words;
  for (const auto& e : full_lexicon().entries())
    if (spellable(e.word, fx.letters)) words.push_back(e);
  std::stable_sort(words.begin(), words.end(), [](auto& a, auto& b) { return a.frequency > b.frequency; });
  if (words.size() > 30) words.resize(30);
  FixtureRun r;
  Lexicon lex;
  for (const auto& e : words) {
    lex.add(e.word, e.frequency);
    r.freqs[e.word] = e.frequency;
  }
  r.model = std::make_unique<fixtures::Small>(std::move(lex), fx.letters, fixtures::converged_planner());
  r.s0 = fx.towers.empty() ? WorldState::all_on_table(r.model->blocks) : WorldState(r.model->blocks, fx.towers);
  r.actions = fixtures::with_pickups(r.s0, fx.stacks);
  for (std::size_t t = 0; t <= r.actions.size(); ++t) r.steps.push_back(t);
  return r;
}

std::vector<FixtureRun>& fixture_runs() {
  static std::vector<FixtureRun> runs = [] {
    std::vector<FixtureRun> v;
    for (const auto& fx : kFixtures) v.push_back(build(fx));
    return v;
  }();
  return runs;
}

// ---------------------------------------------------------------------------

void oracle_equivalence() {
  double worst = 0.0;
  std::size_t words = 0, blocks = 0;
  for (auto& f : fixture_runs()) {
    auto exact = exact_infer(f.model->model, ObservedTrace(f.s0, f.actions), f.steps);
    auto brute = oracle::brute_force_posterior(f.freqs, 4.0, f.model->model.planner.beta, f.s0, f.actions, f.steps);
    for (std::size_t j = 0; j < f.steps.size(); ++j) {
      for (const auto& [w, p] : brute[j]) worst = std::max(worst, std::abs(exact[j].prob(w) - p));
      for (const auto& [w, p] : exact[j].probs)
        if (!brute[j].count(w)) worst = std::max(worst, p);
    }
    words = std::max(words, f.freqs.size());
    blocks = std::max(blocks, f.s0.blocks().size());
  }
  report("oracle-equivalence", worst <= 1e-9 && words <= 30 && blocks <= 5,
         std::to_string(kFixtures.size()) + " fixtures, <=" + std::to_string(blocks) + " blocks, <=" +
             std::to_string(words) + " words, max |exact - brute force| = " + fmt("%.2e", worst));
}

void smc_convergence() {
  const std::vector<std::size_t> ns{2, 10, 50, 200};
  const std::size_t seeds = 50;
  std::vector<double> mean_tvd(ns.size(), 0.0), per_run(ns.size(), 0.0);
  double worst200 = 0.0;
  for (auto& f : fixture_runs()) {
    ObservedTrace trace(f.s0, f.actions);
    const std::vector<std::size_t> last{trace.length()};
    const Dist exact = exact_infer(f.model->model, trace, last).front().probs;
    for (std::size_t k = 0; k < ns.size(); ++k) {
      Dist avg;
      for (std::size_t s = 0; s < seeds; ++s) {
        const auto run = sips_run(f.model->model, trace, last, {ns[k], ProposalWeighting::Marginal}, s).front().probs;
        for (const auto& [w, p] : run) avg[w] += p / static_cast<double>(seeds);
        per_run[k] += tvd_of(Dist(run.begin(), run.end()), exact) /
                      static_cast<double>(seeds * fixture_runs().size());
      }
      const double d = tvd_of(avg, exact);
      mean_tvd[k] += d / static_cast<double>(fixture_runs().size());
      if (ns[k] == 200) worst200 = std::max(worst200, d);
    }
  }
  int inversions = 0;
  for (std::size_t k = 1; k < ns.size(); ++k) inversions += mean_tvd[k] > mean_tvd[k - 1];
  std::ostringstream os;
  os << "seed-averaged final TVD by N";
  for (std::size_t k = 0; k < ns.size(); ++k) os << " " << ns[k] << ":" << fmt("%.4f", mean_tvd[k]);
  os << "; mean per-run TVD";
  for (std::size_t k = 0; k < ns.size(); ++k) os << " " << ns[k] << ":" << fmt("%.4f", per_run[k]);
  os << "; worst fixture at N=200 " << fmt("%.4f", worst200) << ", " << inversions << " inversion(s)";
  report("smc-convergence", worst200 < 0.05 && inversions <= 1, os.str());
}

void planner_optimality() {
  std::mt19937_64 rng(7);
  const std::string alphabet = "aeiostnrlpdkm";
  std::vector<std::string> pool;
  for (const auto& e : full_lexicon().entries())
    if (e.word.size() <= 5) pool.push_back(e.word);
  std::size_t instances = 0, mismatches = 0;
  while (instances < 150) {
    const std::string& word = pool[rng() % pool.size()];
    std::string letters = word;
    while (letters.size() < 5 && rng() % 2) letters += alphabet[rng() % alphabet.size()];
    std::shuffle(letters.begin(), letters.end(), rng);
    auto b = std::make_shared<const BlockSet>(letters);
    auto states = oracle::reachable(WorldState::all_on_table(b));
    const WorldState& s = states[rng() % states.size()];
    const int opt = *oracle::optimal_cost(s, word);
    for (auto strat : {SearchStrategy::BFS, SearchStrategy::AStar}) {
      PlannerParams params = fixtures::converged_planner();
      params.strategy = strat;
      Policy p(Goal(word, b), params);
      p.update(s);
      if (p.value(s) != static_cast<double>(opt)) ++mismatches;
    }
    ++instances;
  }
  report("planner-optimality", mismatches == 0,
         std::to_string(instances) + " instances x {bfs, astar}, " + std::to_string(mismatches) + " mismatch(es)");
}

struct Bundled {
  std::vector<Scenario> scenarios;
  std::shared_ptr<const Engine> engine;
};

const Bundled& bundled() {
  static const Bundled b{load_scenario_dir(kData + "/scenarios"),
                         std::make_shared<const Engine>(Lexicon::load(kData + "/words.tsv"))};
  return b;
}

const Scenario& scenario(const std::string& id) {
  for (const auto& s : bundled().scenarios)
    if (s.id == id) return s;
  throw InvalidArgument("no bundled scenario " + id);
}

Dist proposal_dist(const InferenceModel& model, const ObservedTrace& trace, std::size_t t) {
  auto q = proposal_marginal(trace.state(t), trace.action_into(t), model.proposal);
  double total = 0.0;
  for (const auto& [w, p] : q.probs) total += p;
  Dist out;
  for (const auto& [w, p] : q.probs) out[w] = total > 0 ? p / total : 0.0;
  return out;
}

double at(const Dist& d, const std::string& w) { return d.count(w) ? d.at(w) : 0.0; }

std::size_t step_of(const Scenario& sc, const std::string& action) {
  for (std::size_t i = 0; i < sc.actions.size(); ++i)
    if (describe(sc.actions[i], *sc.blocks) == action) return i + 1;
  throw InvalidArgument(sc.id + " has no " + action);
}

void signatures() {
  const RunParams params;
  {
    const Scenario& sc = scenario("pink");
    const auto model = bundled().engine->model(sc, params);
    const auto trace = sc.trace();
    const std::size_t t = step_of(sc, "stack(t,p)");
    const std::size_t before = t - 2;  // the judgment point preceding the stack
    const auto exact = exact_infer(model, trace, {before, t});
    const double e0 = exact[0].prob("pink"), e1 = exact[1].prob("pink");
    const double q0 = at(proposal_dist(model, trace, before), "pink"), q1 = at(proposal_dist(model, trace, t), "pink");
    report("signature-pink", e1 < e0 && !(q1 < q0),
           "at t-on-p exact P(pink) " + fmt("%.3f", e0) + " -> " + fmt("%.3f", e1) + ", proposal Q(pink) " +
               fmt("%.3f", q0) + " -> " + fmt("%.3f", q1));
  }
  {
    const Scenario& sc = scenario("stake");
    const auto model = bundled().engine->model(sc, params);
    const auto trace = sc.trace();
    const std::size_t t = step_of(sc, "stack(m,f)");
    const Dist exact = exact_infer(model, trace, {t}).front().probs;
    Dist sips;
    const std::size_t seeds = 200;
    for (std::size_t s = 0; s < seeds; ++s)
      for (const auto& [w, p] : sips_run(model, trace, {t}, {params.n_particles, params.weighting}, s).front().probs)
        sips[w] += p / static_cast<double>(seeds);
    const Dist prop = proposal_dist(model, trace, t);
    auto ranks = [](const Dist& d) { return at(d, "take") > at(d, "make") && at(d, "take") > at(d, "fake"); };
    auto show = [](const std::string& name, const Dist& d) {
      return name + " take " + fmt("%.3g", at(d, "take")) + " make " + fmt("%.3g", at(d, "make")) + " fake " +
             fmt("%.3g", at(d, "fake"));
    };
    const bool ok = ranks(exact) && ranks(sips) && !ranks(prop);
    report("signature-stake", ok,
           "at m-on-f " + show("exact", exact) + "; " + show("sips n=2", sips) + "; " + show("proposal", prop) +
               (ranks(prop) ? " (proposal also ranks take first)" : ""));
  }
}

// Protocol runs over the bundled scenarios, shared by the runtime, variance
// and net-reward checks.
struct MethodRuns {
  std::string label;
  RunParams params;
  std::map<std::string, std::vector<RunRecord>> by_scenario;
};

MethodRuns run_protocol(const std::string& label, Method method, std::size_t n, std::size_t trials) {
  MethodRuns m{label, {}, {}};
  m.params.method = method;
  m.params.n_particles = n;
  for (const auto& sc : bundled().scenarios)
    for (std::size_t k = 0; k < trials; ++k) {
      RunRecord r = run_one(*bundled().engine, sc, m.params, trial_seed(0, k), k);
      if (!r.ok()) throw InvalidArgument(label + " on " + sc.id + ": " + r.error);
      m.by_scenario[sc.id].push_back(std::move(r));
    }
  return m;
}

std::size_t spellable_words(const Scenario& sc) { return bundled().engine->model(sc, RunParams{}).prior.size(); }

double median_seconds(const MethodRuns& m, const std::vector<std::string>& ids) {
  std::vector<double> per_scenario;
  for (const auto& id : ids) {
    std::vector<double> x;
    for (const auto& r : m.by_scenario.at(id)) x.push_back(r.seconds_per_action);
    std::sort(x.begin(), x.end());
    per_scenario.push_back(x[x.size() / 2]);
  }
  double s = 0.0;
  for (double v : per_scenario) s += v;
  return s / static_cast<double>(per_scenario.size());
}

void runtime_ordering(const MethodRuns& prop, const MethodRuns& sips2, const MethodRuns& sips50,
                      const MethodRuns& exact) {
  std::vector<std::string> ids;
  for (const auto& sc : bundled().scenarios)
    if (spellable_words(sc) >= 150) ids.push_back(sc.id);
  const double tp = median_seconds(prop, ids), t2 = median_seconds(sips2, ids), t50 = median_seconds(sips50, ids),
               te = median_seconds(exact, ids);
  const bool ok = tp < t2 && t2 < t50 && t50 < te && t2 / tp >= 50.0 && te / t2 >= 10.0;
  report("runtime-ordering", ok,
         std::to_string(ids.size()) + " scenarios with >=150 words, s/action proposal " + fmt("%.2e", tp) +
             " sips2 " + fmt("%.2e", t2) + " sips50 " + fmt("%.2e", t50) + " exact " + fmt("%.2e", te) +
             "; sips2/proposal " + fmt("%.0fx", t2 / tp) + ", exact/sips2 " + fmt("%.1fx", te / t2));
}

double mean_accuracy_std(const MethodRuns& m) {
  double s = 0.0;
  for (const auto& sc : bundled().scenarios) {
    std::vector<std::vector<PosteriorSnapshot>> runs;
    for (const auto& r : m.by_scenario.at(sc.id)) runs.push_back(r.snapshots);
    s += run_variance(runs, sc.true_word).accuracy_std;
  }
  return s / static_cast<double>(bundled().scenarios.size());
}

void variance_scaling(const MethodRuns& sips2, const MethodRuns& sips50, const MethodRuns& exact) {
  const double s2 = mean_accuracy_std(sips2), s50 = mean_accuracy_std(sips50), se = mean_accuracy_std(exact);
  report("variance-scaling", s50 > 0.0 ? s2 / s50 >= 2.0 && se == 0.0 : s2 > 0.0 && se == 0.0,
         "mean accuracy std sips2 " + fmt("%.4f", s2) + " (" + std::to_string(protocol_trials(sips2.params)) +
             " trials), sips50 " + fmt("%.4f", s50) + " (" + std::to_string(protocol_trials(sips50.params)) +
             " trials), ratio " + fmt("%.2f", s50 > 0 ? s2 / s50 : INFINITY) + "; exact " + fmt("%.1e", se));
}

void metric_identities() {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto random_dist = [&] {
    Distribution d;
    const std::size_t k = 1 + rng() % 12;
    double z = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const std::string w = "w" + std::to_string(rng() % 20);
      const double x = u(rng);
      d[w] += x;
      z += x;
    }
    for (auto& [w, p] : d) p /= z;
    return d;
  };
  double worst = 0.0, worst_iou = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Distribution p = random_dist(), q = random_dist();
    worst = std::max(worst, std::abs(overlap(p, q) + tvd(p, q) - 1.0));
    worst_iou = std::max(worst_iou, std::abs(*iou(p, p) - 1.0));
  }
  report("metric-identities", worst <= 1e-12 && worst_iou == 0.0,
         "10000 random pairs, max |overlap + tvd - 1| = " + fmt("%.2e", worst) + ", max |iou(P,P) - 1| = " +
             fmt("%.2e", worst_iou));
}

// Mean over scenarios and trials of net_reward(c).
double mean_net_reward(const MethodRuns& m, double c) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& sc : bundled().scenarios)
    for (const auto& r : m.by_scenario.at(sc.id)) {
      std::vector<double> acc;
      for (const auto& snap : r.snapshots) acc.push_back(accuracy(snap, sc.true_word));
      s += net_reward(acc, r.ledger(), c);
      ++n;
    }
  return s / static_cast<double>(n);
}

void net_reward_curve(const MethodRuns& sips2, const MethodRuns& exact) {
  const double a_e = mean_net_reward(exact, 0.0), a_s = mean_net_reward(sips2, 0.0);
  const double slope_e = a_e - mean_net_reward(exact, 1.0), slope_s = a_s - mean_net_reward(sips2, 1.0);
  double affine_err = 0.0;
  for (double c : {1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 0.1}) {
    affine_err = std::max(affine_err, std::abs(mean_net_reward(exact, c) - (a_e - c * slope_e)));
    affine_err = std::max(affine_err, std::abs(mean_net_reward(sips2, c) - (a_s - c * slope_s)));
  }
  // Affine curves cross once; SIPS dominates beyond if it pays less per unit of c.
  const double cross = slope_e != slope_s ? (a_e - a_s) / (slope_e - slope_s) : NAN;
  const bool dominates = slope_s < slope_e && mean_net_reward(sips2, 2 * cross) > mean_net_reward(exact, 2 * cross);
  report("net-reward-curve", cross > 0.0 && dominates && affine_err <= 1e-9,
         "reward at c=0 exact " + fmt("%.3f", a_e) + " sips2 " + fmt("%.3f", a_s) + ", evaluations exact " +
             fmt("%.0f", slope_e) + " sips2 " + fmt("%.0f", slope_s) + ", curves cross at c=" +
             fmt("%.3e", cross) + ", affine error " + fmt("%.1e", affine_err));
}

void guarded(const std::string& name, const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    report(name, false, std::string("threw: ") + e.what());
  }
}

}  // namespace

int main() {
  guarded("oracle-equivalence", oracle_equivalence);
  guarded("smc-convergence", smc_convergence);
  guarded("planner-optimality", planner_optimality);
  guarded("signatures", signatures);
  guarded("protocol-runs", [] {
    RunParams p2, p50;
    p50.n_particles = 50;
    auto prop = run_protocol("proposal-only", Method::ProposalOnly, 2, 10);
    auto sips2 = run_protocol("sips2", Method::Sips, 2, protocol_trials(p2));
    auto sips50 = run_protocol("sips50", Method::Sips, 50, protocol_trials(p50));
    auto exact = run_protocol("exact", Method::Exact, 1, 2);
    runtime_ordering(prop, sips2, sips50, exact);
    variance_scaling(sips2, sips50, exact);
    net_reward_curve(sips2, exact);
  });
  guarded("metric-identities", metric_identities);
  std::cout << (failures ? "acceptance: " + std::to_string(failures) + " failing" : std::string("acceptance: all pass"))
            << std::endl;
  return failures ? 1 : 0;
}
