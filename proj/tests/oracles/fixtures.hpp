#pragma once

// Small hand-sized models shared by the unit and acceptance suites.

#include <memory>
#include <string>
#include <vector>

#include "blockwords/inference.hpp"

namespace fixtures {

using namespace blockwords;

struct Small {
  Lexicon lexicon;
  std::shared_ptr<const CharNGram> ngram;
  std::shared_ptr<const BlockSet> blocks;
  InferenceModel model;

  Small(Lexicon lex, const std::string& letters, PlannerParams planner = {},
        ProposalStrategy strategy = ProposalStrategy::LastAndNext, double temperature = 4.0)
      : lexicon(std::move(lex)),
        ngram(std::make_shared<const CharNGram>(train_ngram(lexicon, 5, temperature))),
        blocks(std::make_shared<const BlockSet>(letters)),
        model(make_model(lexicon, ngram, blocks, temperature, planner, strategy)) {}
};

/// Expands stack/unstack-level moves into the full four-action trace by
/// inserting the implied pick-up.
inline std::vector<Action> with_pickups(const WorldState& s0, const std::vector<std::pair<BlockId, BlockId>>& stacks) {
  std::vector<Action> out;
  WorldState s = s0;
  for (auto [b, onto] : stacks) {
    auto t = s.tower_of(b);
    Action lift = s.towers()[*t].size() == 1 ? Action::pick_up(b) : Action::unstack(b, s.towers()[*t][1]);
    s = apply(s, lift);
    out.push_back(lift);
    Action place = onto == kNoBlock ? Action::put_down(b) : Action::stack(b, onto);
    s = apply(s, place);
    out.push_back(place);
  }
  return out;
}

inline PlannerParams converged_planner() {
  PlannerParams p;
  p.budget = 1000000;
  p.cadence = 1;
  return p;
}

}  // namespace fixtures
