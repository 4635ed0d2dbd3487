#pragma once

// Boundedly rational agent model: a per-goal value table refined by budgeted
// real-time heuristic search, and the Boltzmann action distribution it
// induces.
//
// Heuristic. The finished tower rests on some bottom block b. Either b never
// moves, in which case b and the blocks kept above it are the settled bottom
// of an existing tower (the longest run from the table that spells the
// goal's last letters), or b moves and every goal letter must be fetched.
// Every block above the settled part moves. A still-needed letter whose
// candidate blocks are all needed pins them, so its tower is dug down to the
// deepest one; each further needed block beyond those already uncovered
// costs at least one more removal. Each moved tower block costs two actions
// and a held block one. The minimum over the cases never exceeds the true
// cost, and it is 0 exactly in goal states.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "blockwords/error.hpp"
#include "blockwords/world.hpp"

namespace blockwords {

enum class SearchStrategy : std::uint8_t { BFS, AStar };

inline std::string_view to_string(SearchStrategy s) noexcept { return s == SearchStrategy::BFS ? "bfs" : "astar"; }

inline std::optional<SearchStrategy> parse_strategy(std::string_view s) noexcept {
  if (s == "bfs" || s == "BFS") return SearchStrategy::BFS;
  if (s == "astar" || s == "ASTAR" || s == "a*" || s == "A*") return SearchStrategy::AStar;
  return std::nullopt;
}

struct PlannerParams {
  double beta = 1.0;
  int budget = 100;  // state expansions per update
  int cadence = 2;   // steps between updates
  SearchStrategy strategy = SearchStrategy::BFS;
};

/// A goal word bound to a block set, with lookups the search needs.
class Goal {
 public:
  Goal(std::string word, std::shared_ptr<const BlockSet> blocks) : word_(std::move(word)), blocks_(std::move(blocks)) {
    Word checked(word_);
    if (!spellable(checked, blocks_->counts()))
      throw InvalidArgument("goal \"" + word_ + "\" cannot be spelled from blocks \"" + blocks_->letters() + "\"");
    for (std::size_t i = 0; i < blocks_->size(); ++i)
      letter_[i] = static_cast<std::int8_t>(letter_index(blocks_->letter(static_cast<BlockId>(i))));
  }

  const std::string& word() const noexcept { return word_; }
  const BlockSet& blocks() const noexcept { return *blocks_; }
  const std::shared_ptr<const BlockSet>& blocks_ptr() const noexcept { return blocks_; }
  int letter(BlockId id) const noexcept { return letter_[id]; }

  /// Exact tower equality with an empty hand.
  bool satisfied(const PackedState& p) const noexcept {
    for (std::uint8_t i = 0; i < p.count; ++i)
      if (p.below[i] == kInHand) return false;
    const auto above = p.above();
    const std::size_t len = word_.size();
    for (std::uint8_t b = 0; b < p.count; ++b) {
      if (p.below[b] != kOnTable || letter_[b] != letter_index(word_[len - 1])) continue;
      std::uint8_t cur = b;
      std::size_t i = 1;
      for (; i < len; ++i) {
        cur = above[cur];
        if (cur == kNoBlock || letter_[cur] != letter_index(word_[len - 1 - i])) break;
      }
      if (i == len && above[cur] == kNoBlock) return true;
    }
    return false;
  }

 private:
  std::string word_;
  std::shared_ptr<const BlockSet> blocks_;
  std::array<std::int8_t, kMaxBlocks> letter_{};
};

/// Admissible lower bound on the number of actions needed to reach `goal`.
inline double heuristic(const PackedState& p, const Goal& goal) {
  const auto above = p.above();
  const std::string& w = goal.word();
  const int len = static_cast<int>(w.size());

  // Towers bottom-up.
  std::array<std::array<std::uint8_t, kMaxBlocks>, kMaxBlocks> towers;
  std::array<int, kMaxBlocks> height{};
  int ntowers = 0;
  int held_letter = -1;
  for (std::uint8_t b = 0; b < p.count; ++b) {
    if (p.below[b] == kInHand) held_letter = goal.letter(b);
    if (p.below[b] != kOnTable) continue;
    int h = 0;
    for (std::uint8_t cur = b; cur != kNoBlock; cur = above[cur]) towers[ntowers][h++] = cur;
    height[ntowers++] = h;
  }
  const int held_cost = held_letter >= 0 ? 1 : 0;

  // Blocks that leave towers when `settled` keeps its bottom `keep` blocks
  // (settled < 0: none kept) and `need` letters must be uncovered.
  auto removals = [&](std::array<int, 26> need, int settled, int keep) {
    if (held_letter >= 0 && need[held_letter] > 0) --need[held_letter];
    std::array<int, kMaxBlocks> cut{};  // blocks removed from each tower's top
    std::array<int, 26> supply{};
    for (int t = 0; t < ntowers; ++t) {
      const int lo = t == settled ? keep : 0;
      for (int i = lo; i < height[t]; ++i) ++supply[goal.letter(towers[t][i])];
    }
    if (settled >= 0) cut[settled] = height[settled] - keep;
    for (int t = 0; t < ntowers; ++t) {
      if (t == settled) continue;
      for (int i = 0; i < height[t]; ++i) {
        const int c = goal.letter(towers[t][i]);
        if (need[c] > 0 && supply[c] <= need[c]) cut[t] = std::max(cut[t], height[t] - i);
      }
    }
    std::array<int, 26> uncovered{};
    int total = 0;
    for (int t = 0; t < ntowers; ++t) {
      total += cut[t];
      for (int i = height[t] - cut[t]; i < height[t]; ++i) ++uncovered[goal.letter(towers[t][i])];
    }
    int extra = 0, step = 0;
    for (int c = 0; c < 26; ++c) {
      const int missing = need[c] - uncovered[c];
      if (missing <= 0) continue;
      extra += missing;
      // Cheapest single extension reaching another block of c.
      int reach = std::numeric_limits<int>::max();
      for (int t = 0; t < ntowers; ++t) {
        if (t == settled) continue;
        for (int i = height[t] - cut[t] - 1; i >= 0; --i)
          if (goal.letter(towers[t][i]) == c) {
            reach = std::min(reach, height[t] - cut[t] - i);
            break;
          }
      }
      if (reach != std::numeric_limits<int>::max()) step = std::max(step, reach);
    }
    return total + std::max(extra, step);
  };

  std::array<int, 26> need{};
  for (char ch : w) ++need[letter_index(ch)];
  int best = 2 * removals(need, -1, 0) + held_cost;

  for (int t = 0; t < ntowers; ++t) {
    int k = 0;
    while (k < height[t] && k < len && goal.letter(towers[t][k]) == letter_index(w[len - 1 - k])) ++k;
    if (k == 0) continue;
    need.fill(0);
    for (int i = 0; i < len - k; ++i) ++need[letter_index(w[i])];
    best = std::min(best, 2 * removals(need, t, k) + held_cost);
  }
  return static_cast<double>(best);
}

inline double heuristic(const WorldState& s, const Goal& goal) { return heuristic(pack(s), goal); }

/// Per-goal value table with real-time heuristic search updates.
class Policy {
 public:
  Policy(Goal goal, PlannerParams params) : goal_(std::move(goal)), params_(params) {
    if (params_.budget < 0) throw InvalidArgument("planning budget must be >= 0");
    if (params_.cadence < 1) throw InvalidArgument("replanning cadence must be >= 1");
    if (!(params_.beta >= 0.0) || !std::isfinite(params_.beta)) throw InvalidArgument("beta must be finite and >= 0");
  }

  const Goal& goal() const noexcept { return goal_; }
  const PlannerParams& params() const noexcept { return params_; }
  std::size_t table_size() const noexcept { return values_.size(); }

  /// Stored value, else the heuristic. Goal states are worth 0.
  double value(const PackedState& s) const {
    auto it = values_.find(s);
    return it != values_.end() ? it->second : heuristic(s, goal_);
  }

  double value(const WorldState& s) const { return value(pack(s)); }

  /// Expands up to `budget` non-goal states around `s` and backs values up
  /// from the boundary of that local search space. Values never decrease.
  void update(const PackedState& s) {
    if (params_.budget == 0 || goal_.satisfied(s)) return;
    std::vector<PackedState> lss = params_.strategy == SearchStrategy::BFS ? expand_bfs(s) : expand_astar(s);
    backup(lss);
  }

  void update(const WorldState& s) { update(pack(s)); }

  /// Q(s,a) = 1 + V(apply(s,a)) for every legal action, in legal_actions order.
  std::vector<double> q_values(const PackedState& s, const std::vector<Action>& actions) const {
    std::vector<double> q;
    q.reserve(actions.size());
    for (const Action& a : actions) q.push_back(1.0 + value(apply_unchecked(s, a)));
    return q;
  }

 private:
  std::vector<PackedState> expand_bfs(const PackedState& start) const {
    std::unordered_map<PackedState, char, PackedStateHash> seen{{start, 1}};
    std::deque<PackedState> frontier{start};
    std::vector<PackedState> expanded;
    while (!frontier.empty() && static_cast<int>(expanded.size()) < params_.budget) {
      PackedState cur = frontier.front();
      frontier.pop_front();
      if (goal_.satisfied(cur)) continue;
      expanded.push_back(cur);
      for (const Action& a : legal_actions(cur)) {
        PackedState next = apply_unchecked(cur, a);
        if (seen.emplace(next, 1).second) frontier.push_back(next);
      }
    }
    return expanded;
  }

  std::vector<PackedState> expand_astar(const PackedState& start) const {
    struct Entry {
      double f, g;
      std::uint64_t seq;
      PackedState s;
      bool operator>(const Entry& o) const {
        if (f != o.f) return f > o.f;
        if (g != o.g) return g < o.g;  // prefer deeper nodes on ties
        return seq > o.seq;
      }
    };
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
    std::unordered_map<PackedState, double, PackedStateHash> best_g{{start, 0.0}};
    std::unordered_map<PackedState, char, PackedStateHash> closed;
    std::vector<PackedState> expanded;
    std::uint64_t seq = 0;
    open.push({value(start), 0.0, seq++, start});
    while (!open.empty() && static_cast<int>(expanded.size()) < params_.budget) {
      Entry e = open.top();
      open.pop();
      if (e.g > best_g[e.s]) continue;  // stale entry
      if (goal_.satisfied(e.s)) break;
      if (!closed.emplace(e.s, 1).second) continue;
      expanded.push_back(e.s);
      for (const Action& a : legal_actions(e.s)) {
        PackedState next = apply_unchecked(e.s, a);
        double g = e.g + 1.0;
        auto [it, inserted] = best_g.try_emplace(next, g);
        if (!inserted) {
          if (g >= it->second) continue;
          it->second = g;
          closed.erase(next);  // reopen
        }
        open.push({g + value(next), g, seq++, next});
      }
    }
    return expanded;
  }

  /// Dijkstra from the boundary inward: V(s) = min_a 1 + V(s') over the
  /// local search space, with boundary states read from the current values.
  void backup(const std::vector<PackedState>& expanded) {
    if (expanded.empty()) return;
    // Reopened A* nodes appear more than once.
    std::vector<PackedState> lss;
    std::unordered_map<PackedState, int, PackedStateHash> index;
    for (const PackedState& s : expanded)
      if (index.emplace(s, static_cast<int>(lss.size())).second) lss.push_back(s);

    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(lss.size(), inf);
    std::vector<std::vector<int>> preds(lss.size());
    std::vector<std::pair<double, int>> boundary;  // (value, lss predecessor)
    for (std::size_t i = 0; i < lss.size(); ++i) {
      for (const Action& a : legal_actions(lss[i])) {
        PackedState next = apply_unchecked(lss[i], a);
        auto it = index.find(next);
        if (it != index.end())
          preds[it->second].push_back(static_cast<int>(i));
        else
          boundary.emplace_back(value(next), static_cast<int>(i));
      }
    }

    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    for (auto [v, i] : boundary) {
      if (1.0 + v < dist[i]) {
        dist[i] = 1.0 + v;
        queue.emplace(dist[i], i);
      }
    }
    while (!queue.empty()) {
      auto [d, i] = queue.top();
      queue.pop();
      if (d > dist[i]) continue;
      for (int p : preds[i]) {
        if (1.0 + d < dist[p]) {
          dist[p] = 1.0 + d;
          queue.emplace(dist[p], p);
        }
      }
    }
    for (std::size_t i = 0; i < lss.size(); ++i) {
      double old = value(lss[i]);
      values_[lss[i]] = std::max(old, dist[i]);
    }
  }

  Goal goal_;
  PlannerParams params_;
  std::unordered_map<PackedState, double, PackedStateHash> values_;
};

/// Boltzmann distribution exp(-beta Q) over legal actions, computed with
/// max-subtraction. Throws InvalidState when there are no legal actions.
inline std::vector<double> boltzmann(const std::vector<double>& q, double beta) {
  if (q.empty()) throw InvalidState("no legal actions");
  double best = *std::min_element(q.begin(), q.end());
  std::vector<double> p(q.size());
  double total = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) total += p[i] = std::exp(-beta * (q[i] - best));
  for (double& x : p) x /= total;
  return p;
}

struct ActionDistribution {
  std::vector<Action> actions;
  std::vector<double> probs;

  double prob(const Action& a) const {
    for (std::size_t i = 0; i < actions.size(); ++i)
      if (actions[i] == a) return probs[i];
    return 0.0;
  }
};

inline ActionDistribution action_dist(const Policy& policy, const PackedState& s, double beta) {
  ActionDistribution d;
  d.actions = legal_actions(s);
  if (d.actions.empty()) throw InvalidState("no legal actions");
  d.probs = boltzmann(policy.q_values(s, d.actions), beta);
  return d;
}

inline ActionDistribution action_dist(const Policy& policy, const WorldState& s, double beta) {
  return action_dist(policy, pack(s), beta);
}

inline ActionDistribution action_dist(const Policy& policy, const WorldState& s) {
  return action_dist(policy, s, policy.params().beta);
}

/// Follows one goal hypothesis along an observed trace: replans on cadence,
/// accumulates the action log-likelihood, and counts evaluations (one per
/// observed step).
class GoalTracker {
 public:
  GoalTracker(Goal goal, PlannerParams params, PackedState start)
      : policy_(std::move(goal), params), state_(start) {}

  /// Log-probability of `a` at the current state; then moves past it.
  double advance(const Action& a) {
    if (step_ % static_cast<std::size_t>(policy_.params().cadence) == 0) policy_.update(state_);
    auto dist = action_dist(policy_, state_, policy_.params().beta);
    double p = dist.prob(a);
    if (p == 0.0) {
      bool legal = std::find(dist.actions.begin(), dist.actions.end(), a) != dist.actions.end();
      if (!legal) throw IllegalAction("action is not legal at step " + std::to_string(step_ + 1));
    }
    double lp = std::log(p);
    loglik_ += lp;
    state_ = apply_unchecked(state_, a);
    ++step_;
    ++evaluations_;
    return lp;
  }

  const Policy& policy() const noexcept { return policy_; }
  const std::string& word() const noexcept { return policy_.goal().word(); }
  double loglik() const noexcept { return loglik_; }
  std::size_t step() const noexcept { return step_; }
  std::size_t evaluations() const noexcept { return evaluations_; }
  const PackedState& state() const noexcept { return state_; }

 private:
  Policy policy_;
  PackedState state_;
  double loglik_ = 0.0;
  std::size_t step_ = 0;
  std::size_t evaluations_ = 0;
};

struct TrajectoryResult {
  double loglik;
  GoalTracker tracker;
};

/// Total log-likelihood of `actions` from `s0` under `goal`, plus the
/// tracker for incremental reuse.
inline TrajectoryResult trajectory_loglik(const Goal& goal, const WorldState& s0, const std::vector<Action>& actions,
                                          const PlannerParams& params) {
  GoalTracker tracker(goal, params, pack(s0));
  for (const Action& a : actions) tracker.advance(a);
  return {tracker.loglik(), std::move(tracker)};
}

}  // namespace blockwords
