#pragma once

// Tabular exports of run records: accuracy and IoU bars with bootstrap
// intervals, per-step top-5 storyboards, mean distributions, variance,
// sample efficiency, runtime, and net-reward curves with quantile ribbons.
// All files are CSV with a header row.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "blockwords/harness.hpp"
#include "blockwords/humans.hpp"
#include "blockwords/metrics.hpp"
#include "blockwords/rng.hpp"

namespace blockwords {

/// Short label identifying a configuration, e.g. "sips n=2 bfs b=100 dt=2".
inline std::string config_label(const RunParams& p) {
  std::ostringstream os;
  os << to_string(p.method);
  if (p.method != Method::Exact) os << " n=" << p.n_particles;
  if (p.method != Method::ProposalOnly)
    os << " " << to_string(p.planner.strategy) << " b=" << p.planner.budget << " dt=" << p.planner.cadence;
  return os.str();
}

struct Interval {
  double lo = 0.0, hi = 0.0;
};

/// Percentile bootstrap interval of the mean from `resamples` draws.
inline Interval bootstrap_mean_ci(const std::vector<double>& xs, std::size_t resamples = 1000, double level = 0.95,
                                  std::uint64_t seed = 0) {
  if (xs.empty()) return {};
  SplitMix64 rng(seed);
  std::vector<double> means;
  means.reserve(resamples);
  for (std::size_t b = 0; b < resamples; ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) s += xs[rng() % xs.size()];
    means.push_back(s / static_cast<double>(xs.size()));
  }
  std::sort(means.begin(), means.end());
  auto q = [&](double p) {
    const double pos = p * static_cast<double>(means.size() - 1);
    const auto i = static_cast<std::size_t>(pos);
    const double f = pos - static_cast<double>(i);
    return i + 1 < means.size() ? means[i] * (1 - f) + means[i + 1] * f : means[i];
  };
  return {q((1 - level) / 2), q(1 - (1 - level) / 2)};
}

/// Linear-interpolation quantile of unsorted values.
inline double quantile(std::vector<double> xs, double p) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const double pos = p * static_cast<double>(xs.size() - 1);
  const auto i = static_cast<std::size_t>(pos);
  const double f = pos - static_cast<double>(i);
  return i + 1 < xs.size() ? xs[i] * (1 - f) + xs[i + 1] * f : xs[i];
}

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

inline std::string num(double x) {
  std::ostringstream os;
  os.precision(10);
  os << x;
  return os.str();
}

class Csv {
 public:
  explicit Csv(std::vector<std::string> header) { row(header); }
  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) text_ += (i ? "," : "") + csv_field(fields[i]);
    text_ += "\n";
  }
  const std::string& text() const noexcept { return text_; }

 private:
  std::string text_;
};

/// Successful records grouped by configuration label, in first-seen order.
inline std::vector<std::pair<std::string, std::vector<const RunRecord*>>> by_config(
    const std::vector<RunRecord>& records) {
  std::vector<std::pair<std::string, std::vector<const RunRecord*>>> out;
  for (const auto& r : records) {
    if (!r.ok()) continue;
    const std::string label = config_label(r.params);
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& g) { return g.first == label; });
    if (it == out.end()) it = out.insert(out.end(), {label, {}});
    it->second.push_back(&r);
  }
  return out;
}

inline const Scenario& scenario_of(const std::vector<Scenario>& scenarios, const std::string& id) {
  auto it = std::find_if(scenarios.begin(), scenarios.end(), [&](const Scenario& s) { return s.id == id; });
  if (it == scenarios.end()) throw InvalidArgument("record for unknown scenario \"" + id + "\"");
  return *it;
}

/// Mean snapshot distribution per judgment point over non-degenerate runs.
inline std::vector<Distribution> mean_distributions(const std::vector<const RunRecord*>& runs) {
  std::vector<Distribution> out;
  std::vector<std::size_t> counts;
  for (const auto* r : runs) {
    if (out.size() < r->snapshots.size()) {
      out.resize(r->snapshots.size());
      counts.resize(r->snapshots.size());
    }
    for (std::size_t j = 0; j < r->snapshots.size(); ++j) {
      if (r->snapshots[j].degenerate) continue;
      ++counts[j];
      for (const auto& [w, p] : r->snapshots[j].probs) out[j][w] += p;
    }
  }
  for (std::size_t j = 0; j < out.size(); ++j)
    for (auto& [w, p] : out[j]) p /= static_cast<double>(counts[j]);
  return out;
}

}  // namespace detail

struct ExportOptions {
  std::vector<double> cost_ratios{0.0, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 0.1};
  std::size_t bootstrap_resamples = 1000;
  std::size_t top_k = 5;
  std::set<std::string> tables;  // stems such as "accuracy"; empty means all
};

inline const std::vector<std::string>& export_table_names() {
  static const std::vector<std::string> names{"accuracy",   "iou",        "distributions", "storyboard",
                                              "variance",   "efficiency", "runtime",       "net_reward"};
  return names;
}

/// Writes every table into `dir` and returns the file names written. Human
/// columns and the IoU table are omitted when `humans` is empty.
inline std::vector<std::string> export_results(const std::vector<RunRecord>& records,
                                               const std::vector<Scenario>& scenarios, const HumanData& humans,
                                               const std::filesystem::path& dir, const ExportOptions& opt = {}) {
  using detail::Csv;
  using detail::num;
  const bool with_humans = !humans.empty();
  const auto groups = detail::by_config(records);

  // Per scenario, per config: runs.
  std::map<std::string, std::map<std::string, std::vector<const RunRecord*>>> cells;
  for (const auto& [label, runs] : groups)
    for (const auto* r : runs) cells[r->scenario][label].push_back(r);

  std::map<std::string, std::vector<Distribution>> human;
  if (with_humans)
    for (const auto& s : scenarios)
      if (const auto* rs = humans.find(s.id)) human[s.id] = average_human_distributions(*rs, s.judgments.size());

  std::vector<std::string> written;
  auto emit = [&](const std::string& name, const Csv& csv) {
    if (!opt.tables.empty() && !opt.tables.count(name.substr(0, name.find('.')))) return;
    write_file_atomic(dir / name, csv.text());
    written.push_back(name);
  };

  // Accuracy bars: per config, mean over runs of each run's mean accuracy.
  {
    Csv csv({"config", "runs", "mean_accuracy", "ci_low", "ci_high", "accuracy_std"});
    for (const auto& [label, runs] : groups) {
      std::vector<double> acc;
      for (const auto* r : runs) {
        const auto& sc = detail::scenario_of(scenarios, r->scenario);
        double a = 0.0;
        for (const auto& s : r->snapshots) a += accuracy(s, sc.true_word);
        acc.push_back(r->snapshots.empty() ? 0.0 : a / static_cast<double>(r->snapshots.size()));
      }
      double mean = 0.0;
      for (double a : acc) mean += a;
      mean /= static_cast<double>(acc.size());
      auto ci = bootstrap_mean_ci(acc, opt.bootstrap_resamples);
      csv.row({label, std::to_string(acc.size()), num(mean), num(ci.lo), num(ci.hi),
               num(std::sqrt(detail::population_variance(acc)))});
    }
    emit("accuracy.csv", csv);
  }

  // IoU bars against the averaged human distributions.
  if (with_humans) {
    Csv csv({"config", "points", "mean_iou", "ci_low", "ci_high"});
    for (const auto& [label, runs] : groups) {
      std::vector<double> vals;
      for (const auto* r : runs) {
        if (!human.count(r->scenario)) continue;
        const auto& h = human.at(r->scenario);
        for (std::size_t j = 0; j < r->snapshots.size() && j < h.size(); ++j)
          if (auto v = iou(h[j], r->snapshots[j].probs); v && !h[j].empty() && !r->snapshots[j].probs.empty())
            vals.push_back(*v);
      }
      if (vals.empty()) continue;
      double mean = 0.0;
      for (double v : vals) mean += v;
      mean /= static_cast<double>(vals.size());
      auto ci = bootstrap_mean_ci(vals, opt.bootstrap_resamples);
      csv.row({label, std::to_string(vals.size()), num(mean), num(ci.lo), num(ci.hi)});
    }
    emit("iou.csv", csv);
  }

  // Mean distributions and top-k storyboards per scenario, config and step.
  {
    std::vector<std::string> dist_header{"scenario", "config", "judgment", "step", "word", "prob"};
    std::vector<std::string> story_header{"scenario", "config", "judgment", "step", "rank", "word", "prob"};
    if (with_humans) story_header.push_back("human_prob");
    Csv dist(dist_header), story(story_header);
    for (const auto& [sid, by_label] : cells) {
      const auto& sc = detail::scenario_of(scenarios, sid);
      for (const auto& [label, runs] : by_label) {
        auto means = detail::mean_distributions(runs);
        for (std::size_t j = 0; j < means.size(); ++j) {
          const std::string step = std::to_string(sc.judgments.at(j));
          for (const auto& [w, p] : means[j]) dist.row({sid, label, std::to_string(j), step, w, num(p)});
          PosteriorSnapshot tmp;
          tmp.probs = means[j];
          std::size_t rank = 1;
          for (const auto& [w, p] : tmp.top(opt.top_k)) {
            std::vector<std::string> row{sid, label, std::to_string(j), step, std::to_string(rank++), w, num(p)};
            if (with_humans) {
              const auto it = human.find(sid);
              row.push_back(it == human.end() ? "" : num(detail::at(it->second.at(j), w)));
            }
            story.row(row);
          }
        }
      }
      if (with_humans && human.count(sid)) {
        const auto& h = human.at(sid);
        for (std::size_t j = 0; j < h.size(); ++j)
          for (const auto& [w, p] : h[j])
            dist.row({sid, "humans", std::to_string(j), std::to_string(sc.judgments.at(j)), w, num(p)});
      }
    }
    emit("distributions.csv", dist);
    emit("storyboard.csv", story);
  }

  // Variance across trials and sample efficiency per step.
  {
    Csv var({"scenario", "config", "runs", "total_variance", "accuracy_std"});
    Csv eff({"scenario", "config", "judgment", "step", "mean_evaluations", "mean_tracked"});
    for (const auto& [sid, by_label] : cells) {
      const auto& sc = detail::scenario_of(scenarios, sid);
      for (const auto& [label, runs] : by_label) {
        if (runs.size() >= 2) {
          std::vector<std::vector<PosteriorSnapshot>> series;
          for (const auto* r : runs) series.push_back(r->snapshots);
          auto v = run_variance(series, sc.true_word);
          var.row({sid, label, std::to_string(runs.size()), num(v.total), num(v.accuracy_std)});
        }
        for (std::size_t j = 0; j < sc.judgments.size(); ++j) {
          double ev = 0.0, tr = 0.0;
          for (const auto* r : runs) {
            ev += static_cast<double>(r->snapshots.at(j).evaluations);
            tr += static_cast<double>(r->snapshots.at(j).unique_hypotheses);
          }
          const double n = static_cast<double>(runs.size());
          eff.row({sid, label, std::to_string(j), std::to_string(sc.judgments[j]), num(ev / n), num(tr / n)});
        }
      }
    }
    emit("variance.csv", var);
    emit("efficiency.csv", eff);
  }

  // Runtime and net reward curves.
  {
    Csv rt({"config", "runs", "mean_seconds_per_action", "q10", "q90"});
    Csv nr({"config", "cost_ratio", "mean_net_reward", "q10", "q90"});
    for (const auto& [label, runs] : groups) {
      std::vector<double> secs;
      for (const auto* r : runs) secs.push_back(r->seconds_per_action);
      double mean = 0.0;
      for (double s : secs) mean += s;
      rt.row({label, std::to_string(runs.size()), num(mean / static_cast<double>(secs.size())),
              num(quantile(secs, 0.1)), num(quantile(secs, 0.9))});
      for (double c : opt.cost_ratios) {
        std::vector<double> vals;
        for (const auto* r : runs) {
          const auto& sc = detail::scenario_of(scenarios, r->scenario);
          std::vector<double> acc;
          for (const auto& s : r->snapshots) acc.push_back(accuracy(s, sc.true_word));
          vals.push_back(net_reward(acc, r->ledger(), c));
        }
        double m = 0.0;
        for (double v : vals) m += v;
        nr.row({label, num(c), num(m / static_cast<double>(vals.size())), num(quantile(vals, 0.1)),
                num(quantile(vals, 0.9))});
      }
    }
    emit("runtime.csv", rt);
    emit("net_reward.csv", nr);
  }
  return written;
}

}  // namespace blockwords
