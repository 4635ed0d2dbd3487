#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "blockwords/export.hpp"
#include "blockwords/harness.hpp"
#include "blockwords/humans.hpp"
#include "blockwords/scenario.hpp"
#include "oracles/fixtures.hpp"

using namespace blockwords;
namespace fs = std::filesystem;

namespace {

Lexicon pink_lexicon() {
  Lexicon lex;
  for (auto [w, f] : std::map<std::string, double>{{"ink", 40}, {"pink", 20}, {"kit", 10}, {"tin", 25},
                                                   {"pit", 15}, {"nip", 5}, {"tip", 30}, {"knit", 3}})
    lex.add(w, f);
  return lex;
}

Scenario pink_scenario() {
  Scenario s;
  s.id = "pink";
  s.condition = Condition::GardenPath;
  s.description = "i on n, then k on i";
  s.blocks = std::make_shared<const BlockSet>("pinkt");
  s.initial = WorldState::all_on_table(s.blocks);
  s.actions = fixtures::with_pickups(s.initial, {{1, 2}, {3, 1}, {0, 3}});
  s.judgments = {0, 2, 4, 6};
  s.true_word = "pink";
  return s;
}

fs::path temp_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("bw_harness_" + name + "_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()));
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::map<std::string, std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  auto header = detail::split_csv_line(line);
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    auto f = detail::split_csv_line(line);
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < header.size(); ++i) row[header[i]] = f.at(i);
    rows.push_back(row);
  }
  return rows;
}

PosteriorSnapshot snap(Distribution d, std::size_t evals = 0) {
  PosteriorSnapshot s;
  s.probs = std::move(d);
  s.unique_hypotheses = s.probs.size();
  s.evaluations = evals;
  return s;
}

}  // namespace

TEST(Scenario, CanonicalTextRoundTripsByteForByte) {
  const Scenario s = pink_scenario();
  const std::string text = to_canonical_text(s);
  const Scenario back = parse_scenario(text);
  EXPECT_EQ(to_canonical_text(back), text);
  EXPECT_EQ(back.actions, s.actions);
  EXPECT_EQ(back.judgments, s.judgments);
  EXPECT_EQ(back.condition, Condition::GardenPath);
}

TEST(Scenario, BundledSetIsCanonicalAndBalanced) {
  const fs::path dir = fs::path(BLOCKWORDS_DATA_DIR) / "scenarios";
  std::map<Condition, int> per_condition;
  int files = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    ++files;
    std::ifstream in(entry.path(), std::ios::binary);
    std::stringstream text;
    text << in.rdbuf();
    const Scenario s = parse_scenario(text.str(), entry.path().string());
    EXPECT_EQ(to_canonical_text(s), text.str()) << entry.path();
    EXPECT_EQ(s.id, entry.path().stem().string());
    ++per_condition[s.condition];
    // The trace is legal and ends with the true word built.
    const ObservedTrace trace = s.trace();
    bool built = false;
    const WorldState& last = trace.state(trace.actions().size());
    for (std::size_t t = 0; t < last.towers().size(); ++t) built |= tower_reading(last, t) == s.true_word;
    EXPECT_TRUE(built) << s.id;
  }
  EXPECT_EQ(files, 16);
  for (Condition c : {Condition::BottomUpFriendly, Condition::IrrationalAlternatives, Condition::GardenPath,
                      Condition::UncommonWords})
    EXPECT_EQ(per_condition[c], 4) << to_string(c);
}

TEST(Scenario, RepeatedLettersUseIds) {
  Scenario s;
  s.id = "dup";
  s.blocks = std::make_shared<const BlockSet>("eel");
  s.initial = WorldState(s.blocks, {{0, 2}, {1}});
  s.actions = {Action::unstack(0, 2), Action::stack(0, 1)};
  s.judgments = {0, 2};
  s.true_word = "eel";
  const std::string text = to_canonical_text(s);
  EXPECT_NE(text.find("\"e#0\""), std::string::npos);
  EXPECT_NE(text.find("unstack(e#0,l)"), std::string::npos);
  EXPECT_EQ(to_canonical_text(parse_scenario(text)), text);
  EXPECT_THROW(parse_block_name(*s.blocks, "e"), InvalidArgument);
  EXPECT_THROW(parse_block_name(*s.blocks, "e#2"), InvalidArgument);
}

TEST(Scenario, SaveAndLoadDirectory) {
  auto dir = temp_dir("scen");
  Scenario a = pink_scenario(), b = pink_scenario();
  b.id = "another";
  save_scenario(a, dir / "b.json");
  save_scenario(b, dir / "a.json");
  auto all = load_scenario_dir(dir);
  ASSERT_EQ(all.size(), 2u);
  EXPECT_EQ(all[0].id, "another");
  EXPECT_EQ(slurp(dir / "b.json"), to_canonical_text(a));
  EXPECT_FALSE(fs::exists(dir / "b.json.tmp"));
  fs::remove_all(dir);
}

TEST(Scenario, SyntaxErrorReportsLine) {
  std::string text = to_canonical_text(pink_scenario());
  text.insert(text.find("\"actions\""), "!");
  try {
    parse_scenario(text, "pink.json");
    FAIL();
  } catch (const ParseError& e) {
    std::size_t expected = 1;
    for (std::size_t i = 0; i < text.find('!'); ++i) expected += text[i] == '\n';
    EXPECT_EQ(e.line(), expected);
    EXPECT_EQ(std::string(e.what()).rfind("pink.json:", 0), 0u);
  }
}

TEST(Scenario, SchemaErrorsNameTheField) {
  auto expect_field = [](nlohmann::ordered_json j, const std::string& prefix) {
    try {
      parse_scenario(j.dump(2));
      ADD_FAILURE() << "accepted: " << prefix;
    } catch (const ParseError& e) {
      EXPECT_NE(std::string(e.what()).find(prefix), std::string::npos) << e.what();
      EXPECT_GT(e.line(), 0u) << e.what();
    }
  };
  const auto good = to_json(pink_scenario());
  auto j = good;
  j["actions"][0] = "put-down(i)";  // nothing is held yet
  expect_field(j, "actions[0]");
  j = good;
  j["true_word"] = "tipi";
  expect_field(j, "true_word");
  j = good;
  j["judgments"] = {0, 4, 2};
  expect_field(j, "judgments[2]");
  j = good;
  j["judgments"] = {0, 99};
  expect_field(j, "judgments[1]");
  j = good;
  j["towers"] = {{"p", "p"}};
  expect_field(j, "towers");
  j = good;
  j["condition"] = "sideways";
  expect_field(j, "condition");
  j = good;
  j["actions"][0] = "fly(i)";
  expect_field(j, "actions[0]");
}

TEST(HumanData, JsonRoundTrip) {
  HumanData d;
  d.scenarios["pink"] = {{"h1", {{"ink"}, {"ink", "pink"}}}, {"h2", {{"tip"}, {"pink"}}}};
  auto back = human_data_from_json(nlohmann::json::parse(to_json(d).dump()));
  ASSERT_EQ(back.scenarios.at("pink").size(), 2u);
  EXPECT_EQ(back.scenarios.at("pink")[1].judgments, (std::vector<std::vector<std::string>>{{"tip"}, {"pink"}}));
}

TEST(HumanData, BundledSyntheticFixture) {
  const fs::path dir = fs::path(BLOCKWORDS_DATA_DIR) / "humans";
  const HumanData json = load_human_data(dir / "synthetic.json");
  const HumanData csv = load_human_data(dir / "synthetic_long.csv");
  EXPECT_EQ(to_json(json), to_json(csv));
  validate(json, load_scenario_dir(fs::path(BLOCKWORDS_DATA_DIR) / "scenarios"));
  // pink after i-on-n: {pink}, {ink, pink}, {pink}, {sink}.
  const auto avg = average_human_distributions(*json.find("pink"), 5);
  EXPECT_DOUBLE_EQ(avg[1].at("pink"), 0.625);
  EXPECT_DOUBLE_EQ(avg[1].at("ink"), 0.125);
  EXPECT_DOUBLE_EQ(avg[1].at("sink"), 0.25);
  EXPECT_NEAR(*iou(avg[1], {{"pink", 1.0}}), 5.0 / 11.0, 1e-12);
  // Nobody in the fixture trips an exclusion rule.
  const HumanData kept = apply_exclusions(json, {});
  for (const auto& [id, rs] : json.scenarios) EXPECT_EQ(kept.find(id)->size(), rs.size()) << id;
}

TEST(HumanData, LongCsvImport) {
  std::istringstream in(
      "Worker_ID,problem,timestep,goals,extra\n"
      "w1,pink,6,\"ink; PINK\",x\n"
      "w1,pink,0,tip,x\n"
      "w2,pink,0,\"tin|kit\",x\n"
      "w2,pink,6,pink nip,x\n");
  auto d = import_long_csv(in);
  const auto& rs = d.scenarios.at("pink");
  ASSERT_EQ(rs.size(), 2u);
  EXPECT_EQ(rs[0].participant, "w1");
  EXPECT_EQ(rs[0].judgments, (std::vector<std::vector<std::string>>{{"tip"}, {"ink", "pink"}}));
  EXPECT_EQ(rs[1].judgments, (std::vector<std::vector<std::string>>{{"tin", "kit"}, {"pink", "nip"}}));
}

TEST(HumanData, LongCsvErrorsCarryLines) {
  std::istringstream missing("participant,scenario,step\n");
  EXPECT_THROW(import_long_csv(missing), ParseError);
  std::istringstream dup("participant,scenario,step,guesses\nh,s,0,ink\nh,s,0,tip\n");
  try {
    import_long_csv(dup, "x.csv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(HumanData, ExclusionRules) {
  ParticipantResponse same{"same", {{"ink"}, {"ink"}, {"ink"}}};
  ParticipantResponse grow{"grow", {{"ink"}, {"ink", "pink"}, {"ink", "pink", "tip"}}};
  ParticipantResponse revise{"revise", {{"ink"}, {"pink"}, {"pink", "tip"}}};
  EXPECT_TRUE(never_updated(same));
  EXPECT_TRUE(add_only(same));
  EXPECT_FALSE(never_updated(grow));
  EXPECT_TRUE(add_only(grow));
  EXPECT_FALSE(add_only(revise));

  HumanData d;
  d.scenarios["pink"] = {same, grow, revise};
  auto kept = apply_exclusions(d, {});
  ASSERT_EQ(kept.scenarios.at("pink").size(), 1u);
  EXPECT_EQ(kept.scenarios.at("pink")[0].participant, "revise");
  EXPECT_EQ(apply_exclusions(d, {true, false}).scenarios.at("pink").size(), 2u);
  EXPECT_EQ(apply_exclusions(d, {false, false}).scenarios.at("pink").size(), 3u);
}

TEST(HumanData, ValidationAgainstScenarios) {
  std::vector<Scenario> sc{pink_scenario()};
  HumanData d;
  d.scenarios["pink"] = {{"h", {{"ink"}, {"pink"}, {"tip"}, {"knit"}}}};
  EXPECT_NO_THROW(validate(d, sc));
  d.scenarios["pink"][0].judgments[2] = {"zebra"};
  EXPECT_THROW(validate(d, sc), InvalidArgument);
  d.scenarios["pink"][0].judgments.pop_back();
  EXPECT_THROW(validate(d, sc), InvalidArgument);
  HumanData other;
  other.scenarios["nope"] = {};
  EXPECT_THROW(validate(other, sc), InvalidArgument);
}

TEST(HumanData, AverageDistribution) {
  std::vector<ParticipantResponse> rs{{"a", {{"ink", "pink"}}}, {"b", {{"pink"}}}, {"c", {{}}}};
  auto avg = average_human_distributions(rs, 1);
  EXPECT_DOUBLE_EQ(avg[0].at("pink"), 0.75);
  EXPECT_DOUBLE_EQ(avg[0].at("ink"), 0.25);
}

TEST(RunParams, JsonRoundTripAndValidation) {
  RunParams p;
  p.method = Method::ProposalOnly;
  p.n_particles = 7;
  p.planner.strategy = SearchStrategy::AStar;
  p.proposal = ProposalStrategy::NextTower;
  p.weighting = ProposalWeighting::Conditional;
  p.epsilon = 0.2;
  auto back = run_params_from_json(nlohmann::json::parse(to_json(p).dump()));
  EXPECT_EQ(to_json(back), to_json(p));
  EXPECT_THROW(run_params_from_json({{"method", "magic"}}), InvalidArgument);
  RunParams bad;
  bad.epsilon = 1.0;
  EXPECT_THROW(validate(bad), InvalidArgument);
  bad = {};
  bad.planner.cadence = 0;
  EXPECT_THROW(validate(bad), InvalidArgument);
}

TEST(Protocol, TrialCounts) {
  RunParams p;
  p.method = Method::Exact;
  EXPECT_EQ(protocol_trials(p), 1u);
  p.method = Method::Sips;
  for (auto [n, m] : std::vector<std::pair<std::size_t, std::size_t>>{{2, 100}, {10, 20}, {20, 10}, {50, 10}, {200, 10}}) {
    p.n_particles = n;
    EXPECT_EQ(protocol_trials(p), m) << n;
  }
}

TEST(Grid, DefaultSizes) {
  EXPECT_EQ(GridSpec::generative_defaults().expand().size(), 5u * 5u * 7u * 2u * 2u);
  EXPECT_EQ(GridSpec::inference_defaults().expand().size(), 5u * 6u * 4u * 5u);
  EXPECT_EQ(GridSpec{}.expand().size(), 1u);
}

TEST(Grid, BundledFilesMatchDefaults) {
  auto load = [](const char* name) {
    std::ifstream in(fs::path(BLOCKWORDS_DATA_DIR) / "grids" / name);
    return grid_from_json(nlohmann::json::parse(in));
  };
  const GridSpec gen = load("generative.json"), inf = load("inference.json");
  EXPECT_EQ(gen.expand().size(), GridSpec::generative_defaults().expand().size());
  EXPECT_EQ(inf.expand().size(), GridSpec::inference_defaults().expand().size());
  EXPECT_EQ(gen.base.method, Method::Exact);
  EXPECT_EQ(inf.base.method, Method::Sips);
  EXPECT_EQ(gen.budget, GridSpec::generative_defaults().budget);
  EXPECT_EQ(inf.proposal, GridSpec::inference_defaults().proposal);
}

TEST(Grid, FromJson) {
  auto g = grid_from_json(nlohmann::json::parse(
      R"({"base": {"method": "exact"}, "axes": {"beta": [0.5, 1], "strategy": ["bfs", "astar"], "budget": [5]}})"));
  auto pts = g.expand();
  ASSERT_EQ(pts.size(), 4u);
  for (const auto& p : pts) {
    EXPECT_EQ(p.method, Method::Exact);
    EXPECT_EQ(p.planner.budget, 5);
  }
  EXPECT_THROW(grid_from_json(nlohmann::json::parse(R"({"axes": {"gamma": [1]}})")), InvalidArgument);
  EXPECT_THROW(grid_from_json(nlohmann::json::parse(R"({"axes": {"strategy": ["dfs"]}})")), InvalidArgument);
}

TEST(Grid, SearchSortsByObjective) {
  Engine engine(pink_lexicon());
  GridSpec g;
  g.base.method = Method::Exact;
  g.beta = {0.25, 4};
  auto rows = grid_search(engine, {pink_scenario()}, g, Objective::Accuracy, {});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_GE(rows[0].objective, rows[1].objective);
  EXPECT_EQ(rows[0].failures, 0u);
  EXPECT_THROW(grid_search(engine, {pink_scenario()}, g, Objective::IouVsHumans, {}), InvalidArgument);
}

TEST(Experiment, RunOneKeepsJudgmentSnapshots) {
  Engine engine(pink_lexicon());
  const Scenario s = pink_scenario();
  for (Method m : {Method::Exact, Method::Sips, Method::ProposalOnly}) {
    RunParams p;
    p.method = m;
    p.n_particles = 5;
    auto r = run_one(engine, s, p, 11);
    ASSERT_TRUE(r.ok()) << r.error;
    ASSERT_EQ(r.snapshots.size(), s.judgments.size());
    for (std::size_t j = 0; j < s.judgments.size(); ++j) EXPECT_EQ(r.snapshots[j].step, s.judgments[j]);
    EXPECT_GT(r.seconds_per_action, 0.0);
  }
}

TEST(Experiment, FailuresAreRecorded) {
  Engine engine(pink_lexicon());
  RunParams p;
  p.n_particles = 0;
  auto r = run_one(engine, pink_scenario(), p, 1);
  EXPECT_FALSE(r.ok());
  EXPECT_TRUE(r.snapshots.empty());
}

TEST(Experiment, DeterministicAcrossThreadCounts) {
  Engine engine(pink_lexicon());
  RunParams sips, po;
  sips.n_particles = 3;
  po.method = Method::ProposalOnly;
  po.n_particles = 3;
  ExperimentOptions one{42, 6, 1}, many{42, 6, 4};
  auto a = run_experiment(engine, {pink_scenario()}, {sips, po}, one);
  auto b = run_experiment(engine, {pink_scenario()}, {sips, po}, many);
  ASSERT_EQ(a.size(), 12u);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].seed, trial_seed(42, a[i].trial));
    EXPECT_EQ(a[i].trial, i % 6);
    ASSERT_EQ(a[i].snapshots.size(), b[i].snapshots.size());
    for (std::size_t j = 0; j < a[i].snapshots.size(); ++j) EXPECT_EQ(a[i].snapshots[j].probs, b[i].snapshots[j].probs);
  }
  // Different trials draw different seeds.
  EXPECT_NE(a[0].seed, a[1].seed);
}

TEST(Records, JsonlRoundTrip) {
  Engine engine(pink_lexicon());
  auto recs = run_experiment(engine, {pink_scenario()}, {RunParams{}}, {7, 3, 1});
  RunParams broken;
  broken.n_particles = 0;
  recs.push_back(run_one(engine, pink_scenario(), broken, 1));
  auto dir = temp_dir("rec");
  save_records(recs, dir / "runs.jsonl");
  auto back = load_records(dir / "runs.jsonl");
  ASSERT_EQ(back.size(), recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) EXPECT_EQ(to_json(back[i]).dump(), to_json(recs[i]).dump());
  std::ofstream(dir / "bad.jsonl") << to_json(recs[0]).dump() << "\n{\n";
  try {
    load_records(dir / "bad.jsonl");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  fs::remove_all(dir);
}

TEST(Export, BootstrapIntervalBracketsMean) {
  std::vector<double> xs{0.1, 0.4, 0.5, 0.9, 0.3};
  auto ci = bootstrap_mean_ci(xs, 1000, 0.95, 3);
  EXPECT_LT(ci.lo, 0.44);
  EXPECT_GT(ci.hi, 0.44);
  auto flat = bootstrap_mean_ci({2, 2, 2}, 1000);
  EXPECT_DOUBLE_EQ(flat.lo, 2.0);
  EXPECT_DOUBLE_EQ(flat.hi, 2.0);
  EXPECT_DOUBLE_EQ(quantile({3, 1, 2}, 0.5), 2.0);
}

// Two runs and two humans on a two-judgment scenario, small enough to check
// every exported number by hand.
TEST(Export, HandComputedFixture) {
  Scenario s = pink_scenario();
  s.judgments = {0, 2};
  RunParams p;
  p.method = Method::Sips;
  RunRecord r1{"pink", p, 1, 0, {snap({{"pink", 0.5}, {"ink", 0.5}}, 4), snap({{"pink", 1.0}}, 10)}, 0.01, ""};
  RunRecord r2{"pink", p, 2, 1, {snap({{"tip", 1.0}}, 2), snap({{"pink", 0.5}, {"tin", 0.5}}, 6)}, 0.03, ""};
  HumanData h;
  h.scenarios["pink"] = {{"a", {{"ink"}, {"pink"}}}, {"b", {{"ink", "pink"}, {"pink", "tin"}}}};

  ExportOptions opt;
  opt.cost_ratios = {0.0, 0.1};
  auto dir = temp_dir("export");
  auto files = export_results({r1, r2}, {s}, h, dir, opt);
  EXPECT_EQ(files.size(), 8u);

  // Humans: j0 {ink .75, pink .25}; j1 {pink .75, tin .25}.
  // IoU = sum min / sum max.
  // r1 j0: min .5+.25=.75, max .5+.75=1.25 -> .6;  r1 j1: .75 / 1.25 = .6
  // r2 j0: 0 / 2 = 0;                            r2 j1: (.5+.25) / (.75+.5) = .6
  auto iou_rows = read_csv(dir / "iou.csv");
  ASSERT_EQ(iou_rows.size(), 1u);
  EXPECT_EQ(iou_rows[0]["points"], "4");
  EXPECT_NEAR(std::stod(iou_rows[0]["mean_iou"]), 0.45, 1e-12);

  // Accuracy per run: r1 (.5 + 1)/2 = .75; r2 (0 + .5)/2 = .25.
  auto acc = read_csv(dir / "accuracy.csv");
  ASSERT_EQ(acc.size(), 1u);
  EXPECT_NEAR(std::stod(acc[0]["mean_accuracy"]), 0.5, 1e-12);
  EXPECT_NEAR(std::stod(acc[0]["accuracy_std"]), 0.25, 1e-12);

  // Mean distributions sum to 1 at every judgment, for model and humans.
  std::map<std::pair<std::string, std::string>, double> sums;
  for (auto& row : read_csv(dir / "distributions.csv")) sums[{row["config"], row["judgment"]}] += std::stod(row["prob"]);
  EXPECT_EQ(sums.size(), 4u);
  for (auto& [k, v] : sums) EXPECT_NEAR(v, 1.0, 1e-12) << k.first << " " << k.second;

  // Storyboard carries the human mass of each listed word.
  for (auto& row : read_csv(dir / "storyboard.csv"))
    if (row["judgment"] == "1" && row["word"] == "tin") {
      EXPECT_NEAR(std::stod(row["human_prob"]), 0.25, 1e-12);
    }

  // Net reward: sum of accuracies minus c times total evaluations.
  // r1: 1.5 - c*10; r2: .5 - c*6. Mean: 1 - 8c.
  for (auto& row : read_csv(dir / "net_reward.csv"))
    EXPECT_NEAR(std::stod(row["mean_net_reward"]), 1.0 - 8.0 * std::stod(row["cost_ratio"]), 1e-12);

  auto eff = read_csv(dir / "efficiency.csv");
  ASSERT_EQ(eff.size(), 2u);
  EXPECT_NEAR(std::stod(eff[1]["mean_evaluations"]), 8.0, 1e-12);

  auto rt = read_csv(dir / "runtime.csv");
  EXPECT_NEAR(std::stod(rt[0]["mean_seconds_per_action"]), 0.02, 1e-12);
  fs::remove_all(dir);
}

TEST(Export, NoHumansSkipsIou) {
  Scenario s = pink_scenario();
  s.judgments = {0};
  RunRecord r{"pink", RunParams{}, 1, 0, {snap({{"pink", 1.0}})}, 0.01, ""};
  auto dir = temp_dir("nohumans");
  auto files = export_results({r}, {s}, {}, dir);
  EXPECT_EQ(std::count(files.begin(), files.end(), "iou.csv"), 0);
  EXPECT_FALSE(fs::exists(dir / "iou.csv"));
  EXPECT_TRUE(fs::exists(dir / "storyboard.csv"));
  fs::remove_all(dir);
}
