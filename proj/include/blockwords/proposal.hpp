#pragma once

// Bottom-up goal proposals Q(g | s, a). Each strategy picks a partial word
// (a tower reading, or a tower the agent could be about to build) and
// completes it with the n-gram. The sample carries q, the completion
// probability given the chosen tower; proposal_marginal sums over the
// choice of tower to give Q itself.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "blockwords/error.hpp"
#include "blockwords/ngram.hpp"
#include "blockwords/rng.hpp"
#include "blockwords/trie.hpp"
#include "blockwords/world.hpp"

namespace blockwords {

enum class ProposalStrategy : std::uint8_t { AnyTower, LastTower, NextTower, LastAndNext };

inline std::string_view to_string(ProposalStrategy s) noexcept {
  switch (s) {
    case ProposalStrategy::AnyTower: return "any-tower";
    case ProposalStrategy::LastTower: return "last-tower";
    case ProposalStrategy::NextTower: return "next-tower";
    case ProposalStrategy::LastAndNext: return "last-and-next";
  }
  return "?";
}

inline std::optional<ProposalStrategy> parse_proposal_strategy(std::string_view s) noexcept {
  if (s == "any-tower") return ProposalStrategy::AnyTower;
  if (s == "last-tower") return ProposalStrategy::LastTower;
  if (s == "next-tower") return ProposalStrategy::NextTower;
  if (s == "last-and-next") return ProposalStrategy::LastAndNext;
  return std::nullopt;
}

struct ProposalConfig {
  ProposalStrategy strategy = ProposalStrategy::LastAndNext;
  std::shared_ptr<const CharNGram> ngram;
  std::shared_ptr<const SuffixTrie> trie;  // over the scenario's spellable words

  void validate() const {
    if (!ngram || !trie) throw InvalidArgument("proposal config needs an n-gram and a dictionary trie");
  }
};

enum class Branch : std::uint8_t { AnyTower, LastTower, NextTower };

inline std::string_view to_string(Branch b) noexcept {
  switch (b) {
    case Branch::AnyTower: return "any-tower";
    case Branch::LastTower: return "last-tower";
    case Branch::NextTower: return "next-tower";
  }
  return "?";
}

/// Route taken by one proposal. `tried` lists the branches visited in order;
/// the last entry produced the word.
struct BranchTrace {
  std::vector<Branch> tried;
  std::string reading;       // partial word that was completed
  double gate = 1.0;         // acceptance probability of the final branch's gate
};

struct ProposalSample {
  std::string word;
  double aux_weight;  // q(word | chosen tower), in (0, 1]
  BranchTrace trace;
};

/// A partial word the proposal may complete, with the letters left for it.
struct Candidate {
  std::string reading;
  LetterCounts available;
  double score;  // n-gram probability of the reading
};

namespace detail {

inline LetterCounts minus(LetterCounts all, std::string_view used) {
  for (char c : used) --all.n[letter_index(c)];
  return all;
}

inline bool feasible(const ProposalConfig& cfg, const Candidate& c) {
  int node = cfg.trie->find(c.reading);
  return node != SuffixTrie::kNone && cfg.trie->completable(node, c.available);
}

/// Probability of an equally tall tower of uniformly drawn block letters.
inline double random_tower_prob(const WorldState& s, std::size_t height) {
  return std::pow(1.0 / static_cast<double>(letters(s).distinct()), static_cast<double>(height));
}

inline double gate(double p, double p_rand) { return p + p_rand > 0.0 ? p / (p + p_rand) : 0.0; }

}  // namespace detail

/// Existing towers with a feasible completion.
inline std::vector<Candidate> any_tower_candidates(const WorldState& s, const ProposalConfig& cfg) {
  std::vector<Candidate> out;
  const LetterCounts all = letters(s);
  for (std::size_t t = 0; t < s.towers().size(); ++t) {
    Candidate c{tower_reading(s, t), {}, 0.0};
    c.available = detail::minus(all, c.reading);
    if (!detail::feasible(cfg, c)) continue;
    c.score = cfg.ngram->sequence_prob(c.reading);
    out.push_back(std::move(c));
  }
  return out;
}

/// The tower `a` just stacked onto, when `a` is a stack action.
inline std::optional<Candidate> last_tower_candidate(const WorldState& s, const Action& a, const ProposalConfig& cfg) {
  if (a.kind != ActionKind::Stack) return std::nullopt;
  auto t = s.tower_of(a.subject);
  if (!t || s.towers()[*t].front() != a.subject) return std::nullopt;
  Candidate c{tower_reading(s, *t), {}, 0.0};
  c.available = detail::minus(letters(s), c.reading);
  c.score = cfg.ngram->sequence_prob(c.reading);
  return c;
}

/// Towers formed by placing the held block, or any block left in the
/// unstacked tower, onto another tower's top. Only feasible ones.
inline std::vector<Candidate> next_tower_candidates(const WorldState& s, const Action& a, const ProposalConfig& cfg) {
  std::vector<Candidate> out;
  if (a.kind != ActionKind::Unstack) return out;
  auto source = s.tower_of(a.target);
  if (!source) return out;
  std::vector<BlockId> movable{a.subject};
  for (BlockId id : s.towers()[*source]) movable.push_back(id);
  const LetterCounts all = letters(s);
  for (BlockId b : movable) {
    for (std::size_t t = 0; t < s.towers().size(); ++t) {
      if (t == *source) continue;
      Candidate c{std::string(1, s.blocks().letter(b)) + tower_reading(s, t), {}, 0.0};
      c.available = detail::minus(all, c.reading);
      if (!detail::feasible(cfg, c)) continue;
      c.score = cfg.ngram->sequence_prob(c.reading);
      out.push_back(std::move(c));
    }
  }
  return out;
}

namespace detail {

template <class Rng>
const Candidate& pick(const std::vector<Candidate>& cands, Rng& rng) {
  std::vector<double> w;
  w.reserve(cands.size());
  for (const auto& c : cands) w.push_back(c.score);
  return cands[sample_index(w, rng)];
}

template <class Rng>
ProposalSample complete(const Candidate& c, const ProposalConfig& cfg, BranchTrace trace, Rng& rng) {
  auto done = sample_completion(*cfg.ngram, c.reading, c.available, *cfg.trie, rng);
  trace.reading = c.reading;
  return {std::move(done.word), done.prob, std::move(trace)};
}

template <class Rng>
ProposalSample any_tower(const WorldState& s, const ProposalConfig& cfg, BranchTrace trace, Rng& rng) {
  trace.tried.push_back(Branch::AnyTower);
  auto cands = any_tower_candidates(s, cfg);
  if (cands.empty()) throw NoProposal("no tower can be completed into a dictionary word");
  trace.gate = 1.0;
  return complete(pick(cands, rng), cfg, std::move(trace), rng);
}

template <class Rng>
ProposalSample next_tower(const WorldState& s, const Action& a, const ProposalConfig& cfg, BranchTrace trace,
                          Rng& rng) {
  trace.tried.push_back(Branch::NextTower);
  auto cands = next_tower_candidates(s, a, cfg);
  if (!cands.empty()) {
    const double u = uniform01(rng);
    const Candidate& c = pick(cands, rng);
    const double g = gate(c.score, random_tower_prob(s, c.reading.size()));
    if (u < g) {
      trace.gate = g;
      return complete(c, cfg, std::move(trace), rng);
    }
  }
  return any_tower(s, cfg, std::move(trace), rng);
}

}  // namespace detail

/// Tower chosen in proportion to how word-like it is, then completed.
template <class Rng>
ProposalSample propose_any_tower(const WorldState& s, const ProposalConfig& cfg, Rng& rng) {
  cfg.validate();
  return detail::any_tower(s, cfg, {}, rng);
}

/// Completes the tower just stacked with probability p_last/(p_last+p_rand),
/// otherwise any-tower.
template <class Rng>
ProposalSample propose_last_tower(const WorldState& s, const Action& a, const ProposalConfig& cfg, Rng& rng) {
  cfg.validate();
  BranchTrace trace;
  if (auto c = last_tower_candidate(s, a, cfg)) {
    trace.tried.push_back(Branch::LastTower);
    const double g = detail::feasible(cfg, *c) ? detail::gate(c->score, detail::random_tower_prob(s, c->reading.size())) : 0.0;
    if (uniform01(rng) < g) {
      trace.gate = g;
      return detail::complete(*c, cfg, std::move(trace), rng);
    }
  }
  return detail::any_tower(s, cfg, std::move(trace), rng);
}

/// After an unstack, completes a tower the agent could form with a block
/// from the unstacked tower; otherwise any-tower.
template <class Rng>
ProposalSample propose_next_tower(const WorldState& s, const Action& a, const ProposalConfig& cfg, Rng& rng) {
  cfg.validate();
  if (a.kind != ActionKind::Unstack) return detail::any_tower(s, cfg, {}, rng);
  return detail::next_tower(s, a, cfg, {}, rng);
}

/// last-tower, with both of its failure cases routed to next-tower.
template <class Rng>
ProposalSample propose_last_and_next(const WorldState& s, const Action& a, const ProposalConfig& cfg, Rng& rng) {
  cfg.validate();
  BranchTrace trace;
  if (auto c = last_tower_candidate(s, a, cfg)) {
    trace.tried.push_back(Branch::LastTower);
    const double g = detail::feasible(cfg, *c) ? detail::gate(c->score, detail::random_tower_prob(s, c->reading.size())) : 0.0;
    if (uniform01(rng) < g) {
      trace.gate = g;
      return detail::complete(*c, cfg, std::move(trace), rng);
    }
  }
  if (a.kind != ActionKind::Unstack) {
    trace.tried.push_back(Branch::NextTower);
    return detail::any_tower(s, cfg, std::move(trace), rng);
  }
  return detail::next_tower(s, a, cfg, std::move(trace), rng);
}

/// Draws from Q(g | s, a). `s` is the state after `a`. Throws NoProposal
/// when no branch can produce a word.
template <class Rng>
ProposalSample propose(const WorldState& s, const Action& a, const ProposalConfig& cfg, Rng& rng) {
  switch (cfg.strategy) {
    case ProposalStrategy::AnyTower: return propose_any_tower(s, cfg, rng);
    case ProposalStrategy::LastTower: return propose_last_tower(s, a, cfg, rng);
    case ProposalStrategy::NextTower: return propose_next_tower(s, a, cfg, rng);
    case ProposalStrategy::LastAndNext: return propose_last_and_next(s, a, cfg, rng);
  }
  throw InvalidArgument("unknown proposal strategy");
}

template <class Rng>
std::optional<ProposalSample> try_propose(const WorldState& s, const Action& a, const ProposalConfig& cfg, Rng& rng) {
  try {
    return propose(s, a, cfg, rng);
  } catch (const NoProposal&) {
    return std::nullopt;
  }
}

/// Q(g | s, a) over all words, obtained by summing every branch. `failure`
/// is the probability that propose throws NoProposal.
struct ProposalMarginal {
  std::map<std::string, double> probs;
  double failure = 0.0;

  double prob(const std::string& word) const {
    auto it = probs.find(word);
    return it == probs.end() ? 0.0 : it->second;
  }
};

/// Routing mass over candidate towers: each (candidate, mass) pair is
/// completed with its completion distribution.
class ProposalRouting {
 public:
  ProposalRouting(const WorldState& s, const Action& a, const ProposalConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    double to_any = 0.0;
    switch (cfg.strategy) {
      case ProposalStrategy::AnyTower: to_any = 1.0; break;
      case ProposalStrategy::LastTower: to_any = route_last(s, a, 1.0); break;
      case ProposalStrategy::NextTower: to_any = route_next(s, a, 1.0); break;
      case ProposalStrategy::LastAndNext: {
        double rest = route_last(s, a, 1.0);
        to_any = a.kind == ActionKind::Unstack ? route_next(s, a, rest) : rest;
        break;
      }
    }
    auto cands = any_tower_candidates(s, cfg);
    double total = 0.0;
    for (const auto& c : cands) total += c.score;
    if (cands.empty() || !(total > 0.0)) {
      failure_ = to_any;
    } else {
      for (auto& c : cands) add(c, to_any * c.score / total);
    }
  }

  /// Q(word | s, a).
  double prob(std::string_view word) const {
    double q = 0.0;
    for (const auto& [c, mass] : routes_)
      q += mass * completion_prob(*cfg_.ngram, c.reading, c.available, *cfg_.trie, word);
    return q;
  }

  ProposalMarginal marginal() const {
    ProposalMarginal m;
    m.failure = failure_;
    for (const auto& [c, mass] : routes_)
      for (const auto& done : enumerate_completions(*cfg_.ngram, c.reading, c.available, *cfg_.trie))
        m.probs[done.word] += mass * done.prob;
    return m;
  }

  double failure() const noexcept { return failure_; }
  const std::vector<std::pair<Candidate, double>>& routes() const noexcept { return routes_; }

 private:
  // Mass routed on from the last-tower gate.
  double route_last(const WorldState& s, const Action& a, double mass) {
    auto c = last_tower_candidate(s, a, cfg_);
    if (!c || !detail::feasible(cfg_, *c)) return mass;
    double g = detail::gate(c->score, detail::random_tower_prob(s, c->reading.size()));
    add(*c, mass * g);
    return mass * (1.0 - g);
  }

  double route_next(const WorldState& s, const Action& a, double mass) {
    auto cands = next_tower_candidates(s, a, cfg_);
    double total = 0.0;
    for (const auto& c : cands) total += c.score;
    if (cands.empty() || !(total > 0.0)) return mass;
    double rest = 0.0;
    for (const auto& c : cands) {
      double chosen = mass * c.score / total;
      double g = detail::gate(c.score, detail::random_tower_prob(s, c.reading.size()));
      add(c, chosen * g);
      rest += chosen * (1.0 - g);
    }
    return rest;
  }

  void add(const Candidate& c, double mass) {
    if (mass <= 0.0) return;
    for (auto& [existing, m] : routes_)
      if (existing.reading == c.reading) {
        m += mass;
        return;
      }
    routes_.emplace_back(c, mass);
  }

  ProposalConfig cfg_;
  std::vector<std::pair<Candidate, double>> routes_;
  double failure_ = 0.0;
};

inline ProposalMarginal proposal_marginal(const WorldState& s, const Action& a, const ProposalConfig& cfg) {
  return ProposalRouting(s, a, cfg).marginal();
}

}  // namespace blockwords
