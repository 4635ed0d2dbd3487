// bwinfer: batch runs, parameter fits, exports, validation, n-gram builds
// and the live session server.
//
// Exit codes: 0 success, 1 invalid input, 2 runtime failure.

#include <pthread.h>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>

#include "CLI11.hpp"
#include "blockwords.hpp"
#include "blockwords/http_server.hpp"

namespace fs = std::filesystem;
using namespace blockwords;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kFailure = 2;

#ifdef BLOCKWORDS_DATA_DIR
const std::string kDefaultWords = std::string(BLOCKWORDS_DATA_DIR) + "/words.tsv";
#else
const std::string kDefaultWords = "data/words.tsv";
#endif

/// Input was well-formed enough to read but fails a check.
struct Invalid : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string words = kDefaultWords;
  std::string ngram_file;
};

/// Flags that build RunParams; each list is an axis of the run product.
struct ParamFlags {
  std::vector<std::string> methods{"sips"};
  std::vector<std::size_t> n_particles{2};
  double beta = 1.0;
  int budget = 100;
  int cadence = 2;
  std::string strategy = "bfs";
  std::string proposal = "last-and-next";
  std::string weighting = "marginal";
  std::string proposal_only_weighting = "counts";
  double tw = 4.0;
  double epsilon = 0.05;

  void add(CLI::App& cmd, bool multi) {
    if (multi) {
      cmd.add_option("--method", methods, "exact, sips or proposal_only (repeatable)")->capture_default_str();
      cmd.add_option("--n-particles", n_particles, "particle counts (repeatable)")->capture_default_str();
    } else {
      cmd.add_option("--method", methods, "exact, sips or proposal_only")->expected(1)->capture_default_str();
      cmd.add_option("--n-particles", n_particles, "particle count")->expected(1)->capture_default_str();
    }
    cmd.add_option("--beta", beta, "Boltzmann inverse temperature")->capture_default_str();
    cmd.add_option("--budget", budget, "node expansions per search")->capture_default_str();
    cmd.add_option("--cadence", cadence, "replan every this many steps")->capture_default_str();
    cmd.add_option("--strategy", strategy, "bfs or astar")->capture_default_str();
    cmd.add_option("--proposal", proposal, "any-tower, last-tower, next-tower or last-and-next")->capture_default_str();
    cmd.add_option("--weighting", weighting, "proposal weight: marginal or conditional")->capture_default_str();
    cmd.add_option("--proposal-only-weighting", proposal_only_weighting, "counts or importance")
        ->capture_default_str();
    cmd.add_option("--tw", tw, "word frequency temperature")->capture_default_str();
    cmd.add_option("--epsilon", epsilon, "n-gram termination bias")->capture_default_str();
  }

  std::vector<RunParams> expand() const {
    nlohmann::json base = {{"beta", beta},         {"budget", budget},       {"cadence", cadence},
                           {"strategy", strategy}, {"proposal", proposal},   {"weighting", weighting},
                           {"tw", tw},             {"epsilon", epsilon},
                           {"proposal_only_weighting", proposal_only_weighting}};
    std::vector<RunParams> out;
    std::set<std::string> seen;
    for (const auto& m : methods)
      for (std::size_t n : n_particles) {
        auto j = base;
        j["method"] = m;
        j["n_particles"] = m == "exact" ? std::size_t{1} : n;
        RunParams p = run_params_from_json(j);
        validate(p);
        if (seen.insert(to_json(p).dump()).second) out.push_back(p);
      }
    return out;
  }
};

/// The dictionary, plus a prebuilt n-gram when one was given.
std::shared_ptr<Engine> make_engine(const Common& c) {
  auto engine = std::make_shared<Engine>(Lexicon::load(c.words));
  if (!c.ngram_file.empty()) {
    std::ifstream in(c.ngram_file);
    if (!in) throw ParseError(c.ngram_file, 0, "cannot open file");
    const auto j = nlohmann::json::parse(in);
    engine->set_ngram(j.value("tw", 4.0), std::make_shared<const CharNGram>(CharNGram::from_json(j)));
  }
  return engine;
}

std::vector<Scenario> load_scenarios(const std::vector<std::string>& files, const std::string& dir) {
  std::vector<Scenario> out;
  for (const auto& f : files) out.push_back(load_scenario(f));
  if (!dir.empty()) {
    auto more = load_scenario_dir(dir);
    out.insert(out.end(), more.begin(), more.end());
  }
  if (out.empty()) throw Invalid("no scenarios given; use --scenario or --scenario-dir");
  std::set<std::string> ids;
  for (const auto& s : out)
    if (!ids.insert(s.id).second) throw Invalid("duplicate scenario id \"" + s.id + "\"");
  return out;
}

HumanData load_humans(const std::string& path, bool keep_never_updated, bool keep_add_only,
                      const std::vector<Scenario>& scenarios) {
  if (path.empty()) return {};
  HumanData d = load_human_data(path);
  validate(d, scenarios);
  return apply_exclusions(d, {!keep_never_updated, !keep_add_only});
}

void print_summary(const std::vector<RunRecord>& records, const std::vector<Scenario>& scenarios) {
  std::map<std::string, std::vector<const RunRecord*>> groups;
  for (const auto& r : records) groups[config_label(r.params)].push_back(&r);
  std::cerr << std::left << std::setw(36) << "config" << std::right << std::setw(8) << "runs" << std::setw(10)
            << "failed" << std::setw(12) << "accuracy" << std::setw(14) << "sec/action" << "\n";
  for (const auto& [label, runs] : groups) {
    std::vector<RunRecord> ok;
    std::size_t failed = 0;
    double secs = 0.0;
    for (const auto* r : runs) {
      if (r->ok()) {
        ok.push_back(*r);
        secs += r->seconds_per_action;
      } else {
        ++failed;
      }
    }
    std::cerr << std::left << std::setw(36) << label << std::right << std::setw(8) << runs.size() << std::setw(10)
              << failed << std::setw(12) << std::fixed << std::setprecision(4)
              << (ok.empty() ? 0.0 : mean_accuracy(ok, scenarios)) << std::setw(14) << std::setprecision(6)
              << (ok.empty() ? 0.0 : secs / static_cast<double>(ok.size())) << "\n";
  }
}

std::vector<std::string> list_records(const std::string& path) {
  if (!fs::is_directory(path)) return {path};
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(path))
    if (e.path().extension() == ".jsonl") files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Invalid("no .jsonl record files in " + path);
  return files;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Goal inference over block-stacking traces"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--words", common.words, "dictionary file (word<TAB>frequency)")
      ->envname("BLOCKWORDS_WORDS")
      ->capture_default_str();
  app.add_option("--ngram", common.ngram_file, "prebuilt n-gram file from the ngram command");

  // run
  auto* run = app.add_subcommand("run", "run inference methods over scenarios and write JSONL records");
  std::vector<std::string> scenario_files;
  std::string scenario_dir, out_path = "-";
  std::uint64_t seed = 0;
  std::optional<std::size_t> trials;
  std::size_t threads = 1;
  ParamFlags run_params;
  run->add_option("--scenario", scenario_files, "scenario file (repeatable)")->check(CLI::ExistingFile);
  run->add_option("--scenario-dir", scenario_dir, "directory of scenario files")->check(CLI::ExistingDirectory);
  run_params.add(*run, true);
  run->add_option("--seed", seed, "base seed; trial k uses a seed derived from it")->capture_default_str();
  run->add_option("--trials", trials, "trials per configuration (default: 1 for exact, max(10, 200/N) otherwise)");
  run->add_option("--threads", threads, "worker threads")->capture_default_str();
  run->add_option("--out", out_path, "output JSONL file, or - for stdout")->capture_default_str();

  // fit
  auto* fit = app.add_subcommand("fit", "grid search over parameters");
  std::string grid_file, preset, objective_name = "accuracy", humans_path, fit_out;
  bool keep_never_updated = false, keep_add_only = false;
  fit->add_option("--grid", grid_file, "grid file {\"base\": {...}, \"axes\": {...}}")->check(CLI::ExistingFile);
  fit->add_option("--preset", preset, "built-in grid: generative or inference")
      ->check(CLI::IsMember({"generative", "inference"}));
  fit->add_option("--objective", objective_name, "accuracy or iou_vs_humans")->capture_default_str();
  fit->add_option("--humans", humans_path, "human guesses (.json or long-format .csv)")->check(CLI::ExistingFile);
  fit->add_flag("--keep-never-updated", keep_never_updated, "keep participants who never changed their guesses");
  fit->add_flag("--keep-add-only", keep_add_only, "keep participants who only ever added guesses");
  fit->add_option("--scenario", scenario_files, "scenario file (repeatable)")->check(CLI::ExistingFile);
  fit->add_option("--scenario-dir", scenario_dir, "directory of scenario files")->check(CLI::ExistingDirectory);
  fit->add_option("--seed", seed, "base seed")->capture_default_str();
  fit->add_option("--trials", trials, "trials per grid point (default: protocol)");
  fit->add_option("--threads", threads, "worker threads")->capture_default_str();
  fit->add_option("--out", fit_out, "ranked table as CSV");
  std::size_t show = 10;
  fit->add_option("--show", show, "rows printed to stderr")->capture_default_str();

  // export
  auto* exp = app.add_subcommand("export", "write CSV tables from run records");
  std::string records_path, export_dir;
  std::vector<std::string> tables;
  std::vector<double> cost_ratios;
  exp->add_option("--records", records_path, "JSONL file or directory of them")->required()->check(CLI::ExistingPath);
  exp->add_option("--scenario", scenario_files, "scenario file (repeatable)")->check(CLI::ExistingFile);
  exp->add_option("--scenario-dir", scenario_dir, "directory of scenario files")->check(CLI::ExistingDirectory);
  exp->add_option("--humans", humans_path, "human guesses (.json or long-format .csv)")->check(CLI::ExistingFile);
  exp->add_flag("--keep-never-updated", keep_never_updated, "keep participants who never changed their guesses");
  exp->add_flag("--keep-add-only", keep_add_only, "keep participants who only ever added guesses");
  exp->add_option("--out", export_dir, "output directory")->required();
  exp->add_option("--tables", tables, "subset of tables to write (default all)")
      ->check(CLI::IsMember(export_table_names()));
  exp->add_option("--cost-ratios", cost_ratios, "cost ratios for the net reward table");

  // validate
  auto* val = app.add_subcommand("validate", "check scenario files (and optionally human data)");
  std::vector<std::string> validate_paths;
  val->add_option("paths", validate_paths, "scenario files or directories")->required()->check(CLI::ExistingPath);
  val->add_option("--humans", humans_path, "human guesses to check against the scenarios")->check(CLI::ExistingFile);

  // ngram
  auto* ng = app.add_subcommand("ngram", "train the character n-gram and save it as JSON");
  double ng_tw = 4.0, ng_eps = CharNGram::kDefaultEpsilon;
  int ng_order = CharNGram::kDefaultOrder;
  std::string ng_out;
  ng->add_option("--tw", ng_tw, "frequency temperature")->capture_default_str();
  ng->add_option("--epsilon", ng_eps, "termination bias")->capture_default_str();
  ng->add_option("--order", ng_order, "n-gram order")->capture_default_str();
  ng->add_option("--out", ng_out, "output file")->required();

  // serve
  auto* srv = app.add_subcommand("serve", "serve live inference sessions over HTTP");
  std::string host = "127.0.0.1";
  int port = 8080;
  ParamFlags serve_params;
  serve_params.n_particles = {20};
  srv->add_option("--host", host, "bind address")->envname("BLOCKWORDS_HOST")->capture_default_str();
  srv->add_option("--port", port, "port")->envname("BLOCKWORDS_PORT")->capture_default_str();
  serve_params.add(*srv, false);
  srv->get_option("--n-particles")->envname("BLOCKWORDS_N_PARTICLES");
  srv->get_option("--method")->envname("BLOCKWORDS_METHOD");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kInvalid;
  }

  try {
    if (*run) {
      auto scenarios = load_scenarios(scenario_files, scenario_dir);
      auto params = run_params.expand();
      auto engine = make_engine(common);
      ExperimentOptions opt{seed, trials, std::max<std::size_t>(threads, 1)};
      auto records = run_experiment(*engine, scenarios, params, opt);
      if (out_path == "-") {
        for (const auto& r : records) std::cout << to_json(r).dump() << "\n";
      } else {
        save_records(records, out_path);
      }
      print_summary(records, scenarios);
      for (const auto& r : records)
        if (!r.ok()) {
          std::cerr << "error: " << r.scenario << " trial " << r.trial << ": " << r.error << "\n";
          return kFailure;
        }
      return kOk;
    }

    if (*fit) {
      auto scenarios = load_scenarios(scenario_files, scenario_dir);
      auto objective = parse_objective(objective_name);
      if (!objective) throw Invalid("--objective: expected accuracy or iou_vs_humans");
      if (grid_file.empty() == preset.empty()) throw Invalid("give exactly one of --grid or --preset");
      GridSpec grid;
      if (!grid_file.empty()) {
        std::ifstream in(grid_file);
        try {
          grid = grid_from_json(nlohmann::json::parse(in));
        } catch (const nlohmann::json::parse_error& e) {
          throw ParseError(grid_file, 0, e.what());
        }
      } else {
        grid = preset == "generative" ? GridSpec::generative_defaults() : GridSpec::inference_defaults();
      }
      auto humans = load_humans(humans_path, keep_never_updated, keep_add_only, scenarios);
      if (*objective == Objective::IouVsHumans && humans.empty())
        throw Invalid("--objective iou_vs_humans needs --humans");
      auto engine = make_engine(common);
      auto rows = grid_search(*engine, scenarios, grid, *objective, humans,
                              {seed, trials, std::max<std::size_t>(threads, 1)});
      std::string csv = "rank,objective,runs,failures,seconds_per_action,params\n";
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        std::ostringstream line;
        line << i + 1 << "," << std::setprecision(10) << r.objective << "," << r.runs << "," << r.failures << ","
             << r.seconds_per_action << "," << detail::csv_field(to_json(r.params).dump()) << "\n";
        csv += line.str();
        if (i < show)
          std::cerr << std::setw(4) << i + 1 << "  " << std::fixed << std::setprecision(4) << r.objective << "  "
                    << to_json(r.params).dump() << "\n";
      }
      if (!fit_out.empty()) write_file_atomic(fit_out, csv);
      return kOk;
    }

    if (*exp) {
      auto scenarios = load_scenarios(scenario_files, scenario_dir);
      std::vector<RunRecord> records;
      for (const auto& f : list_records(records_path)) {
        auto more = load_records(f);
        records.insert(records.end(), more.begin(), more.end());
      }
      std::erase_if(records, [](const RunRecord& r) { return !r.ok(); });
      if (records.empty()) throw Invalid("no successful run records to export");
      for (const auto& r : records) (void)detail::scenario_of(scenarios, r.scenario);
      auto humans = load_humans(humans_path, keep_never_updated, keep_add_only, scenarios);
      ExportOptions opt;
      opt.tables.insert(tables.begin(), tables.end());
      if (!cost_ratios.empty()) opt.cost_ratios = cost_ratios;
      for (const auto& name : export_results(records, scenarios, humans, export_dir, opt))
        std::cerr << "wrote " << (fs::path(export_dir) / name).string() << "\n";
      return kOk;
    }

    if (*val) {
      std::vector<std::string> files;
      for (const auto& p : validate_paths) {
        if (!fs::is_directory(p)) {
          files.push_back(p);
          continue;
        }
        for (const auto& e : fs::directory_iterator(p))
          if (e.path().extension() == ".json") files.push_back(e.path().string());
      }
      std::sort(files.begin(), files.end());
      int status = kOk;
      std::vector<Scenario> scenarios;
      for (const auto& f : files) {
        try {
          scenarios.push_back(load_scenario(f));
          std::cout << "ok      " << f << "\n";
        } catch (const Error& e) {
          std::cout << "invalid " << e.what() << "\n";
          status = kInvalid;
        }
      }
      if (!humans_path.empty()) {
        try {
          validate(load_human_data(humans_path), scenarios);
          std::cout << "ok      " << humans_path << "\n";
        } catch (const Error& e) {
          std::cout << "invalid " << humans_path << ": " << e.what() << "\n";
          status = kInvalid;
        }
      }
      return status;
    }

    if (*ng) {
      auto lexicon = Lexicon::load(common.words);
      auto j = train_ngram(lexicon, ng_order, ng_tw, ng_eps).to_json();
      j["tw"] = ng_tw;
      write_file_atomic(ng_out, j.dump() + "\n");
      std::cerr << "wrote " << ng_out << "\n";
      return kOk;
    }

    if (*srv) {
      auto params = serve_params.expand();
      auto engine = make_engine(common);
      (void)engine->ngram(params[0].tw, params[0].epsilon);  // train before accepting requests
      auto sessions = std::make_shared<SessionManager>(engine, params[0]);
      // Server threads inherit the blocked mask; only this thread takes the signal.
      sigset_t stop_signals;
      sigemptyset(&stop_signals);
      sigaddset(&stop_signals, SIGINT);
      sigaddset(&stop_signals, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);
      HttpServer server(sessions);
      const int bound = server.start(host, port);
      std::cerr << "listening on http://" << host << ":" << bound << "\n";
      int sig = 0;
      sigwait(&stop_signals, &sig);
      server.stop();
      return kOk;
    }
  } catch (const Invalid& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const InvalidWord& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const InvalidState& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}
