#pragma once

// Distribution similarity, accuracy, run-to-run variance and cost measures,
// plus conversion of human guess lists into distributions.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "blockwords/error.hpp"
#include "blockwords/inference.hpp"
#include "blockwords/world.hpp"

namespace blockwords {

using Distribution = std::map<std::string, double>;

namespace detail {

inline double at(const Distribution& d, const std::string& k) {
  auto it = d.find(k);
  return it == d.end() ? 0.0 : it->second;
}

inline std::set<std::string> union_keys(const Distribution& p, const Distribution& q) {
  std::set<std::string> keys;
  for (const auto& [k, v] : p) keys.insert(k);
  for (const auto& [k, v] : q) keys.insert(k);
  return keys;
}

/// Shifted by the first value, so identical inputs give exactly 0.
inline double population_variance(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  double s = 0.0, sq = 0.0;
  for (double v : x) {
    s += v - x.front();
    sq += (v - x.front()) * (v - x.front());
  }
  const double n = static_cast<double>(x.size());
  return std::max(0.0, (sq - s * s / n) / n);
}

}  // namespace detail

/// Sum of min(P, Q).
inline double overlap(const Distribution& p, const Distribution& q) {
  double s = 0.0;
  for (const auto& [k, v] : p) s += std::min(v, detail::at(q, k));
  return s;
}

inline double tvd(const Distribution& p, const Distribution& q) {
  double s = 0.0;
  for (const auto& k : detail::union_keys(p, q)) s += std::abs(detail::at(p, k) - detail::at(q, k));
  return s / 2;
}

/// Jaccard index of two distributions; nullopt when both are empty.
inline std::optional<double> iou(const Distribution& p, const Distribution& q) {
  double lo = 0.0, hi = 0.0;
  for (const auto& k : detail::union_keys(p, q)) {
    const double a = detail::at(p, k), b = detail::at(q, k);
    lo += std::min(a, b);
    hi += std::max(a, b);
  }
  if (!(hi > 0.0)) return std::nullopt;
  return lo / hi;
}

/// Correlation of the two probability vectors, zero-filled over the union of
/// supports (or over `full` when given). nullopt when either is constant.
inline std::optional<double> pearson(const Distribution& p, const Distribution& q,
                                     const std::vector<std::string>* full = nullptr) {
  std::vector<std::string> keys;
  if (full) {
    keys = *full;
  } else {
    auto u = detail::union_keys(p, q);
    keys.assign(u.begin(), u.end());
  }
  const double n = static_cast<double>(keys.size());
  if (keys.size() < 2) return std::nullopt;
  double mx = 0.0, my = 0.0;
  for (const auto& k : keys) {
    mx += detail::at(p, k);
    my += detail::at(q, k);
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (const auto& k : keys) {
    const double dx = detail::at(p, k) - mx, dy = detail::at(q, k) - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

inline double accuracy(const PosteriorSnapshot& s, const std::string& true_word) { return s.prob(true_word); }

struct RunVariance {
  std::vector<double> per_step;  // sum over goals of the across-run variance
  double total = 0.0;            // sum of per_step
  double accuracy_std = 0.0;     // std across runs of the run's mean accuracy
};

/// Runs are snapshot series over the same judgment points. Variances use the
/// population convention (divide by the number of runs).
inline RunVariance run_variance(const std::vector<std::vector<PosteriorSnapshot>>& runs, const std::string& true_word) {
  if (runs.size() < 2) throw InvalidArgument("run_variance needs at least two runs");
  const std::size_t steps = runs.front().size();
  for (const auto& r : runs)
    if (r.size() != steps) throw InvalidArgument("runs have different numbers of judgment points");
  RunVariance out;
  for (std::size_t t = 0; t < steps; ++t) {
    std::set<std::string> goals;
    for (const auto& r : runs)
      for (const auto& [w, p] : r[t].probs) goals.insert(w);
    double v = 0.0;
    for (const auto& g : goals) {
      std::vector<double> x;
      for (const auto& r : runs) x.push_back(r[t].prob(g));
      v += detail::population_variance(x);
    }
    out.per_step.push_back(v);
    out.total += v;
  }
  std::vector<double> acc;
  for (const auto& r : runs) {
    double a = 0.0;
    for (const auto& s : r) a += accuracy(s, true_word);
    acc.push_back(steps ? a / static_cast<double>(steps) : 0.0);
  }
  out.accuracy_std = std::sqrt(detail::population_variance(acc));
  return out;
}

/// Cumulative particle evaluations and tracked hypotheses per judgment point.
struct CostLedger {
  std::vector<std::size_t> evaluations;
  std::vector<std::size_t> tracked;

  static CostLedger of(const std::vector<PosteriorSnapshot>& series) {
    CostLedger l;
    for (const auto& s : series) {
      l.evaluations.push_back(s.evaluations);
      l.tracked.push_back(s.unique_hypotheses);
    }
    return l;
  }

  std::size_t total_evaluations() const { return evaluations.empty() ? 0 : evaluations.back(); }
};

/// Summed accuracy minus c times total evaluations (reward per correct unit
/// fixed at 1).
inline double net_reward(const std::vector<double>& accuracies, const CostLedger& ledger, double cost_ratio) {
  if (!(cost_ratio >= 0.0)) throw InvalidArgument("cost ratio must be non-negative");
  double r = 0.0;
  for (double a : accuracies) r += a;
  return r - cost_ratio * static_cast<double>(ledger.total_evaluations());
}

/// Checks a guess: 3 to 8 lowercase letters, all available among `blocks`.
inline void validate_guess(std::string_view guess, const LetterCounts& blocks) {
  if (!Word::is_valid(guess)) throw InvalidWord("guess \"" + std::string(guess) + "\" must be 3 to 8 lowercase letters");
  if (!spellable(guess, blocks))
    throw InvalidWord("guess \"" + std::string(guess) + "\" uses letters that are not available");
}

/// 1/n over the n distinct guesses; empty for no guesses.
inline Distribution human_distribution(const std::vector<std::string>& guesses) {
  std::set<std::string> distinct(guesses.begin(), guesses.end());
  Distribution d;
  for (const auto& g : distinct) d[g] = 1.0 / static_cast<double>(distinct.size());
  return d;
}

/// $0.10 split across the guesses when the true word is among them.
inline double bonus(const std::vector<std::string>& guesses, const std::string& true_word) {
  if (std::find(guesses.begin(), guesses.end(), true_word) == guesses.end()) return 0.0;
  return 0.1 / static_cast<double>(guesses.size());
}

}  // namespace blockwords
