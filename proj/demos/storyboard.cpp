// Prints the five most probable goals at every judgment point of a scenario
// for exact inference, SIPS (averaged over seeds) and the proposal alone
// (its exact marginal, which is what proposal-only runs estimate).
//
//   storyboard data/scenarios/pink.json --n 2 --seeds 100 --watch ink,pink

#include <iomanip>
#include <iostream>

#include "CLI11.hpp"
#include "blockwords.hpp"

using namespace blockwords;

namespace {

void print_top(const std::string& label, const Distribution& d, std::size_t k, const std::string& truth,
               const std::vector<std::string>& watch) {
  PosteriorSnapshot s;
  s.probs = d;
  std::cout << "    " << std::left << std::setw(14) << label;
  for (const auto& [w, p] : s.top(k))
    std::cout << (w == truth ? "*" : " ") << std::setw(9) << w << std::fixed << std::setprecision(3) << p << "  ";
  std::cout << " | p(" << truth << ")=" << std::setprecision(4) << s.prob(truth);
  for (const auto& w : watch) std::cout << " p(" << w << ")=" << std::scientific << std::setprecision(3) << s.prob(w);
  std::cout << std::defaultfloat << "\n";
}

Distribution mean_of(const std::vector<Distribution>& ds) {
  Distribution m;
  for (const auto& d : ds)
    for (const auto& [w, p] : d) m[w] += p / static_cast<double>(ds.size());
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Top-5 goals per judgment point"};
  std::string path, words = std::string(BLOCKWORDS_DATA_DIR) + "/words.tsv";
  std::size_t n = 2, seeds = 50, k = 5;
  RunParams params;
  std::string strategy = "bfs";
  std::vector<std::string> watch;
  app.add_option("scenario", path, "scenario file")->required()->check(CLI::ExistingFile);
  app.add_option("--words", words, "dictionary")->capture_default_str();
  app.add_option("--n", n, "SIPS particles")->capture_default_str();
  app.add_option("--seeds", seeds, "SIPS runs to average")->capture_default_str();
  app.add_option("--top", k, "goals shown")->capture_default_str();
  app.add_option("--budget", params.planner.budget, "planner budget")->capture_default_str();
  app.add_option("--cadence", params.planner.cadence, "replan cadence")->capture_default_str();
  app.add_option("--beta", params.planner.beta, "inverse temperature")->capture_default_str();
  app.add_option("--strategy", strategy, "bfs or astar")->capture_default_str();
  app.add_option("--watch", watch, "extra words whose probability is printed")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  try {
    params.planner.strategy = *parse_strategy(strategy);
    const Scenario sc = load_scenario(path);
    const Engine engine(Lexicon::load(words));
    const InferenceModel model = engine.model(sc, params);
    const ObservedTrace trace = sc.trace();
    std::cout << sc.id << " (" << to_string(sc.condition) << "), " << model.prior.size()
              << " spellable words, true word " << sc.true_word << "\n";

    const auto exact = exact_infer(model, trace, sc.judgments);
    std::vector<std::vector<PosteriorSnapshot>> sips;
    for (std::size_t s = 0; s < seeds; ++s) sips.push_back(sips_run(model, trace, sc.judgments, {n, params.weighting}, s));

    for (std::size_t j = 0; j < sc.judgments.size(); ++j) {
      const std::size_t t = sc.judgments[j];
      std::cout << "t=" << t << (t > 0 ? "  after " + describe(trace.actions()[t - 1], *sc.blocks) : "") << "\n";
      print_top("exact", exact[j].probs, k, sc.true_word, watch);
      std::vector<Distribution> ds;
      for (const auto& run : sips) ds.push_back(run[j].probs);
      print_top("sips n=" + std::to_string(n), mean_of(ds), k, sc.true_word, watch);
      auto q = proposal_marginal(trace.state(t), trace.action_into(t), model.proposal);
      double total = 0.0;
      for (const auto& [w, p] : q.probs) total += p;
      for (auto& [w, p] : q.probs) p /= total > 0 ? total : 1.0;
      print_top("proposal", q.probs, k, sc.true_word, watch);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
