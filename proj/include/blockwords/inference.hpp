#pragma once

// Goal inference over an observed action trace: exact enumeration, the
// sequential Monte Carlo filter that mixes bottom-up proposals with inverse
// planning, and the proposal-only baseline.
//
// Filter weights are kept on the marginal-likelihood scale: after a step,
// the weights sum to an estimate of sum_g P(g) P(a_1:t | g). Old particles
// are multiplied by P(a_t | ...); each of the N proposal slots contributes
// P(g) P(a_1:t | g) / (N Q(g)) unless g was already carried over, in which
// case the slot is dropped so no goal is estimated twice. Resampling hands
// every copy W/N.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "blockwords/error.hpp"
#include "blockwords/lexicon.hpp"
#include "blockwords/ngram.hpp"
#include "blockwords/planner.hpp"
#include "blockwords/proposal.hpp"
#include "blockwords/rng.hpp"
#include "blockwords/trie.hpp"
#include "blockwords/world.hpp"

namespace blockwords {

/// Placeholder "last action" before anything was observed; every proposal
/// strategy treats it as neither a stack nor an unstack.
inline constexpr Action kNoAction{ActionKind::PutDown, kNoBlock, kNoBlock};

/// Initial state plus the fine-grained action sequence and visited states.
class ObservedTrace {
 public:
  ObservedTrace(WorldState initial, std::vector<Action> actions) : actions_(std::move(actions)) {
    states_.push_back(std::move(initial));
    for (std::size_t i = 0; i < actions_.size(); ++i) {
      try {
        states_.push_back(apply(states_.back(), actions_[i]));
      } catch (const IllegalAction& e) {
        throw IllegalAction("step " + std::to_string(i + 1) + ": " + e.what());
      }
    }
  }

  const WorldState& initial() const noexcept { return states_.front(); }
  const std::vector<Action>& actions() const noexcept { return actions_; }
  /// State after `t` actions.
  const WorldState& state(std::size_t t) const { return states_.at(t); }
  std::size_t length() const noexcept { return actions_.size(); }
  /// Action that led to state(t), or kNoAction at t = 0.
  const Action& action_into(std::size_t t) const { return t == 0 ? kNoAction : actions_.at(t - 1); }

 private:
  std::vector<Action> actions_;
  std::vector<WorldState> states_;
};

/// Everything fixed for one scenario: blocks, goal prior, planner and
/// proposal settings.
struct InferenceModel {
  std::shared_ptr<const BlockSet> blocks;
  GoalPrior prior;
  PlannerParams planner;
  ProposalConfig proposal;
};

/// Builds the prior over words spellable from `blocks` and a trie over it.
inline InferenceModel make_model(const Lexicon& lexicon, std::shared_ptr<const CharNGram> ngram,
                                 std::shared_ptr<const BlockSet> blocks, double temperature,
                                 PlannerParams planner = {},
                                 ProposalStrategy strategy = ProposalStrategy::LastAndNext) {
  InferenceModel m;
  m.prior = goal_prior(lexicon, blocks->counts(), temperature);
  m.blocks = std::move(blocks);
  m.planner = planner;
  m.proposal.strategy = strategy;
  m.proposal.ngram = std::move(ngram);
  m.proposal.trie = std::make_shared<const SuffixTrie>(m.prior.words());
  return m;
}

struct PosteriorSnapshot {
  std::size_t step = 0;
  std::map<std::string, double> probs;
  std::size_t unique_hypotheses = 0;
  std::size_t evaluations = 0;  // cumulative
  bool degenerate = false;

  double prob(const std::string& word) const {
    auto it = probs.find(word);
    return it == probs.end() ? 0.0 : it->second;
  }

  /// Highest-probability words, ties broken alphabetically.
  std::vector<std::pair<std::string, double>> top(std::size_t k) const {
    std::vector<std::pair<std::string, double>> v(probs.begin(), probs.end());
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (v.size() > k) v.resize(k);
    return v;
  }
};

namespace detail {

inline double logsumexp(double a, double b) {
  if (a == -INFINITY) return b;
  if (b == -INFINITY) return a;
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

/// Normalizes log-weights into probabilities; empty result when all are -inf.
inline std::vector<double> normalize_logs(const std::vector<double>& logs) {
  double m = -INFINITY;
  for (double l : logs) m = std::max(m, l);
  if (m == -INFINITY) return {};
  std::vector<double> p(logs.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logs.size(); ++i) total += p[i] = std::exp(logs[i] - m);
  for (double& x : p) x /= total;
  return p;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Exact enumeration
// ---------------------------------------------------------------------------

/// Tracks every word in the prior's support.
class ExactTracker {
 public:
  ExactTracker(const InferenceModel& model, const WorldState& initial) : model_(&model) {
    if (model.prior.size() == 0) throw EmptySupport("goal prior is empty");
    const PackedState start = pack(initial);
    trackers_.reserve(model.prior.size());
    for (const auto& w : model.prior.words()) trackers_.emplace_back(Goal(w, model.blocks), model.planner, start);
  }

  void step(const Action& a) {
    for (auto& t : trackers_) t.advance(a);
    ++step_;
  }

  PosteriorSnapshot snapshot() const {
    std::vector<double> logs;
    logs.reserve(trackers_.size());
    for (std::size_t i = 0; i < trackers_.size(); ++i)
      logs.push_back(std::log(model_->prior.probs()[i]) + trackers_[i].loglik());
    PosteriorSnapshot s;
    s.step = step_;
    s.evaluations = evaluations();
    auto p = detail::normalize_logs(logs);
    s.degenerate = p.empty();
    for (std::size_t i = 0; i < p.size(); ++i)
      if (p[i] > 0.0) s.probs.emplace(trackers_[i].word(), p[i]);
    s.unique_hypotheses = trackers_.size();
    return s;
  }

  std::size_t evaluations() const noexcept { return step_ * trackers_.size(); }
  const std::vector<GoalTracker>& trackers() const noexcept { return trackers_; }

 private:
  const InferenceModel* model_;
  std::vector<GoalTracker> trackers_;
  std::size_t step_ = 0;
};

/// One snapshot per entry of `judgments` (step indices into the trace).
inline std::vector<PosteriorSnapshot> exact_infer(const InferenceModel& model, const ObservedTrace& trace,
                                                  const std::vector<std::size_t>& judgments) {
  ExactTracker tracker(model, trace.initial());
  std::vector<PosteriorSnapshot> out;
  std::size_t t = 0;
  for (std::size_t j : judgments) {
    if (j > trace.length()) throw InvalidArgument("judgment step beyond the trace");
    for (; t < j; ++t) tracker.step(trace.actions()[t]);
    out.push_back(tracker.snapshot());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Resampling
// ---------------------------------------------------------------------------

/// Systematic resampling: copy counts for positions (u + i)/n, i < n.
/// `weights` need not be normalized; throws EmptySupport if they sum to 0.
inline std::vector<std::size_t> systematic_counts(const std::vector<double>& weights, std::size_t n, double u) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw EmptySupport("cannot resample: all weights are zero");
  std::vector<std::size_t> counts(weights.size(), 0);
  double cumulative = 0.0;
  std::size_t i = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double pos = (u + static_cast<double>(k)) / static_cast<double>(n) * total;
    while (i + 1 < weights.size() && cumulative + weights[i] <= pos) cumulative += weights[i++];
    ++counts[i];
  }
  return counts;
}

/// Resamples `items` (with weights) down to n equally weighted copies.
template <class T, class Rng>
std::vector<T> resample(const std::vector<T>& items, const std::vector<double>& weights, std::size_t n, Rng& rng) {
  auto counts = systematic_counts(weights, n, uniform01(rng));
  std::vector<T> out;
  out.reserve(n);
  for (std::size_t i = 0; i < items.size(); ++i)
    for (std::size_t c = 0; c < counts[i]; ++c) out.push_back(items[i]);
  return out;
}

/// Merges entries with equal keys by summing weights; order of first
/// appearance is kept.
inline std::vector<std::pair<std::string, double>> coalesce(const std::vector<std::pair<std::string, double>>& items) {
  std::vector<std::pair<std::string, double>> out;
  std::unordered_map<std::string, std::size_t> at;
  for (const auto& [k, w] : items) {
    auto [it, inserted] = at.try_emplace(k, out.size());
    if (inserted)
      out.emplace_back(k, w);
    else
      out[it->second].second += w;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sequential Monte Carlo
// ---------------------------------------------------------------------------

/// How a proposal slot's importance weight divides out the proposal.
enum class ProposalWeighting : std::uint8_t {
  Marginal,     // exact Q(g | s, a), summed over tower choices
  Conditional,  // q(g | s, a, tower) of the sampled tower only
};

inline std::string_view to_string(ProposalWeighting w) noexcept {
  return w == ProposalWeighting::Marginal ? "marginal" : "conditional";
}

inline std::optional<ProposalWeighting> parse_weighting(std::string_view s) noexcept {
  if (s == "marginal") return ProposalWeighting::Marginal;
  if (s == "conditional") return ProposalWeighting::Conditional;
  return std::nullopt;
}

struct SipsConfig {
  std::size_t n_particles = 2;
  ProposalWeighting weighting = ProposalWeighting::Marginal;
};

struct Particle {
  std::string goal;
  double log_weight;
};

class SipsFilter {
 public:
  /// Slot index reserved for the resampling draw of each step.
  static constexpr std::uint64_t kResampleSlot = std::uint64_t{1} << 32;

  SipsFilter(const InferenceModel& model, SipsConfig config, std::uint64_t seed, WorldState initial)
      : model_(&model), config_(config), seed_(seed), state_(std::move(initial)), start_(pack(state_)) {
    if (config_.n_particles < 1) throw InvalidArgument("particle count must be >= 1");
    model.proposal.validate();
  }

  /// Observes `a` at the current state: reweights old particles, adds
  /// proposals, resamples to N and coalesces.
  void step(const Action& a) {
    WorldState next = apply(state_, a);
    history_.push_back(a);
    const std::size_t t = history_.size();

    const std::size_t n_old = particles_.size();
    for (Particle& p : particles_) {
      p.log_weight += tracker(p.goal).advance(a);
      ++evaluations_;
    }

    std::optional<ProposalRouting> routing;
    std::unordered_map<std::string, double> q_cache;
    const double log_slots = std::log(static_cast<double>(config_.n_particles));
    for (std::size_t slot = 0; slot < config_.n_particles; ++slot) {
      auto rng = stream_for(seed_, t, slot);
      auto sample = try_propose(next, a, model_->proposal, rng);
      if (!sample) continue;
      auto found = std::find_if(particles_.begin(), particles_.end(),
                                [&](const Particle& p) { return p.goal == sample->word; });
      // Goals carried over from the last step already hold their estimate.
      if (found < particles_.begin() + static_cast<std::ptrdiff_t>(n_old)) continue;
      const double prior = model_->prior.prob(sample->word);
      if (prior <= 0.0) continue;
      double q = sample->aux_weight;
      if (config_.weighting == ProposalWeighting::Marginal) {
        if (!routing) routing.emplace(next, a, model_->proposal);
        auto [it, fresh] = q_cache.try_emplace(sample->word, 0.0);
        if (fresh) it->second = routing->prob(sample->word);
        q = it->second;
      }
      if (!(q > 0.0)) continue;
      GoalTracker& tr = caught_up(sample->word);
      const double lw = std::log(prior) + tr.loglik() - std::log(q) - log_slots;
      if (found != particles_.end())
        found->log_weight = detail::logsumexp(found->log_weight, lw);
      else
        particles_.push_back({sample->word, lw});
    }

    state_ = std::move(next);
    resample_and_coalesce(t);
  }

  PosteriorSnapshot snapshot() const {
    PosteriorSnapshot s;
    s.step = history_.size();
    s.evaluations = evaluations_;
    s.unique_hypotheses = particles_.size();
    std::vector<double> logs;
    for (const Particle& p : particles_) logs.push_back(p.log_weight);
    auto probs = detail::normalize_logs(logs);
    s.degenerate = probs.empty();
    for (std::size_t i = 0; i < probs.size(); ++i)
      if (probs[i] > 0.0) s.probs[particles_[i].goal] += probs[i];
    return s;
  }

  const std::vector<Particle>& particles() const noexcept { return particles_; }
  const WorldState& state() const noexcept { return state_; }
  std::size_t evaluations() const noexcept { return evaluations_; }
  bool degenerate() const noexcept { return degenerate_; }
  std::size_t step_count() const noexcept { return history_.size(); }

  /// log of the summed weights: an estimate of sum_g P(g) P(a_1:t | g).
  double log_evidence() const {
    double z = -INFINITY;
    for (const Particle& p : particles_) z = detail::logsumexp(z, p.log_weight);
    return z;
  }

 private:
  GoalTracker& tracker(const std::string& word) {
    auto it = trackers_.find(word);
    if (it == trackers_.end())
      it = trackers_.emplace(word, GoalTracker(Goal(word, model_->blocks), model_->planner, start_)).first;
    return it->second;
  }

  /// Tracker advanced through the whole history; each step is one evaluation.
  GoalTracker& caught_up(const std::string& word) {
    GoalTracker& tr = tracker(word);
    while (tr.step() < history_.size()) {
      tr.advance(history_[tr.step()]);
      ++evaluations_;
    }
    return tr;
  }

  void resample_and_coalesce(std::size_t t) {
    std::vector<double> logs;
    for (const Particle& p : particles_) logs.push_back(p.log_weight);
    auto probs = detail::normalize_logs(logs);
    degenerate_ = probs.empty();
    if (degenerate_) return;
    const double log_total = log_evidence();
    auto rng = stream_for(seed_, t, kResampleSlot);
    auto counts = systematic_counts(probs, config_.n_particles, uniform01(rng));
    const double log_share = log_total - std::log(static_cast<double>(config_.n_particles));
    std::vector<Particle> kept;
    for (std::size_t i = 0; i < particles_.size(); ++i)
      if (counts[i] > 0)
        kept.push_back({particles_[i].goal, log_share + std::log(static_cast<double>(counts[i]))});
    particles_ = std::move(kept);
  }

  const InferenceModel* model_;
  SipsConfig config_;
  std::uint64_t seed_;
  WorldState state_;
  PackedState start_;
  std::vector<Action> history_;
  std::vector<Particle> particles_;
  std::unordered_map<std::string, GoalTracker> trackers_;
  std::size_t evaluations_ = 0;
  bool degenerate_ = false;
};

inline std::vector<PosteriorSnapshot> sips_run(const InferenceModel& model, const ObservedTrace& trace,
                                               const std::vector<std::size_t>& judgments, SipsConfig config,
                                               std::uint64_t seed) {
  SipsFilter filter(model, config, seed, trace.initial());
  std::vector<PosteriorSnapshot> out;
  std::size_t t = 0;
  for (std::size_t j : judgments) {
    if (j > trace.length()) throw InvalidArgument("judgment step beyond the trace");
    for (; t < j; ++t) filter.step(trace.actions()[t]);
    out.push_back(filter.snapshot());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Proposal-only baseline
// ---------------------------------------------------------------------------

enum class ProposalOnlyWeighting : std::uint8_t {
  Counts,      // each successful draw counts once
  Importance,  // draws weighted by P(g) / q
};

inline std::optional<ProposalOnlyWeighting> parse_proposal_only_weighting(std::string_view s) noexcept {
  if (s == "counts") return ProposalOnlyWeighting::Counts;
  if (s == "importance") return ProposalOnlyWeighting::Importance;
  return std::nullopt;
}

/// N fresh proposals at (state(t), action_into(t)), with no memory of
/// earlier steps.
inline PosteriorSnapshot proposal_only_snapshot(const InferenceModel& model, const ObservedTrace& trace,
                                                std::size_t t, std::size_t n, std::uint64_t seed,
                                                ProposalOnlyWeighting weighting = ProposalOnlyWeighting::Counts) {
  if (n < 1) throw InvalidArgument("particle count must be >= 1");
  PosteriorSnapshot s;
  s.step = t;
  std::map<std::string, double> mass;
  double total = 0.0;
  for (std::size_t slot = 0; slot < n; ++slot) {
    auto rng = stream_for(seed, t, slot);
    auto sample = try_propose(trace.state(t), trace.action_into(t), model.proposal, rng);
    if (!sample) continue;
    double w = weighting == ProposalOnlyWeighting::Counts ? 1.0 : model.prior.prob(sample->word) / sample->aux_weight;
    mass[sample->word] += w;
    total += w;
  }
  s.degenerate = !(total > 0.0);
  if (!s.degenerate)
    for (auto& [word, m] : mass) s.probs.emplace(word, m / total);
  s.unique_hypotheses = s.probs.size();
  return s;
}

inline std::vector<PosteriorSnapshot> proposal_only_run(const InferenceModel& model, const ObservedTrace& trace,
                                                        const std::vector<std::size_t>& judgments, std::size_t n,
                                                        std::uint64_t seed,
                                                        ProposalOnlyWeighting weighting = ProposalOnlyWeighting::Counts) {
  std::vector<PosteriorSnapshot> out;
  for (std::size_t j : judgments) {
    if (j > trace.length()) throw InvalidArgument("judgment step beyond the trace");
    out.push_back(proposal_only_snapshot(model, trace, j, n, seed, weighting));
  }
  return out;
}

}  // namespace blockwords
