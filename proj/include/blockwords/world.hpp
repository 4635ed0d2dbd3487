#pragma once

// Block Words domain: lettered blocks in towers, one hand, four actions.
//
// Towers are listed top to bottom and spell their word top to bottom, so
// stacking a block onto a tower prepends a letter to its reading.

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "blockwords/error.hpp"

namespace blockwords {

using BlockId = std::uint8_t;
inline constexpr std::size_t kMaxBlocks = 32;
inline constexpr BlockId kNoBlock = 0xFF;

inline bool is_letter(char c) noexcept { return c >= 'a' && c <= 'z'; }
inline int letter_index(char c) noexcept { return c - 'a'; }

/// Multiset of lowercase letters.
struct LetterCounts {
  std::array<int, 26> n{};

  static LetterCounts of(std::string_view letters) {
    LetterCounts out;
    for (char c : letters) {
      if (!is_letter(c)) throw InvalidWord(std::string("not a lowercase letter: '") + c + "'");
      ++out.n[letter_index(c)];
    }
    return out;
  }

  int operator[](char c) const noexcept { return n[letter_index(c)]; }

  /// True iff `other` is a sub-multiset of this one.
  bool contains(const LetterCounts& other) const noexcept {
    for (std::size_t i = 0; i < 26; ++i)
      if (other.n[i] > n[i]) return false;
    return true;
  }

  int total() const noexcept {
    int t = 0;
    for (int v : n) t += v;
    return t;
  }

  int distinct() const noexcept {
    return static_cast<int>(std::count_if(n.begin(), n.end(), [](int v) { return v > 0; }));
  }

  bool operator==(const LetterCounts&) const = default;
};

/// A goal word: 3 to 8 lowercase letters.
class Word {
 public:
  static constexpr std::size_t kMinLength = 3;
  static constexpr std::size_t kMaxLength = 8;

  explicit Word(std::string_view letters) : letters_(letters) {
    if (!is_valid(letters))
      throw InvalidWord("word must be 3-8 lowercase letters: \"" + std::string(letters) + "\"");
  }

  static bool is_valid(std::string_view s) noexcept {
    return s.size() >= kMinLength && s.size() <= kMaxLength &&
           std::all_of(s.begin(), s.end(), is_letter);
  }

  const std::string& str() const noexcept { return letters_; }
  std::size_t size() const noexcept { return letters_.size(); }
  char operator[](std::size_t i) const noexcept { return letters_[i]; }

  auto operator<=>(const Word&) const = default;

 private:
  std::string letters_;
};

inline bool spellable(const Word& goal, const LetterCounts& blocks) {
  return blocks.contains(LetterCounts::of(goal.str()));
}

/// Throws InvalidWord when `goal` violates the 3-8 letter rule.
inline bool spellable(std::string_view goal, const LetterCounts& blocks) {
  return spellable(Word(goal), blocks);
}

/// Letters of a scenario's blocks, indexed by block id (ids are 0..n-1).
class BlockSet {
 public:
  BlockSet() = default;

  explicit BlockSet(std::string letters) : letters_(std::move(letters)) {
    if (letters_.size() > kMaxBlocks)
      throw InvalidState("at most " + std::to_string(kMaxBlocks) + " blocks are supported");
    for (char c : letters_)
      if (!is_letter(c)) throw InvalidState(std::string("block letter must be a-z, got '") + c + "'");
  }

  std::size_t size() const noexcept { return letters_.size(); }
  char letter(BlockId id) const { return letters_.at(id); }
  const std::string& letters() const noexcept { return letters_; }
  LetterCounts counts() const { return LetterCounts::of(letters_); }

  bool operator==(const BlockSet&) const = default;

 private:
  std::string letters_;
};

enum class ActionKind : std::uint8_t { PickUp, PutDown, Stack, Unstack };

inline std::string_view to_string(ActionKind k) noexcept {
  switch (k) {
    case ActionKind::PickUp: return "pick-up";
    case ActionKind::PutDown: return "put-down";
    case ActionKind::Stack: return "stack";
    case ActionKind::Unstack: return "unstack";
  }
  return "?";
}

inline std::optional<ActionKind> parse_action_kind(std::string_view s) noexcept {
  if (s == "pick-up") return ActionKind::PickUp;
  if (s == "put-down") return ActionKind::PutDown;
  if (s == "stack") return ActionKind::Stack;
  if (s == "unstack") return ActionKind::Unstack;
  return std::nullopt;
}

/// `target` is the destination top (stack) or the block underneath (unstack);
/// kNoBlock for pick-up and put-down. Ordering is kind, then subject, then target.
struct Action {
  ActionKind kind = ActionKind::PickUp;
  BlockId subject = 0;
  BlockId target = kNoBlock;

  static Action pick_up(BlockId b) { return {ActionKind::PickUp, b, kNoBlock}; }
  static Action put_down(BlockId b) { return {ActionKind::PutDown, b, kNoBlock}; }
  static Action stack(BlockId b, BlockId onto) { return {ActionKind::Stack, b, onto}; }
  static Action unstack(BlockId b, BlockId from) { return {ActionKind::Unstack, b, from}; }

  bool has_target() const noexcept { return kind == ActionKind::Stack || kind == ActionKind::Unstack; }

  auto operator<=>(const Action&) const = default;
};

/// "stack(i,n)" using block letters; ids are appended when letters repeat.
inline std::string describe(const Action& a, const BlockSet& blocks) {
  auto name = [&](BlockId id) {
    std::string s(1, blocks.letter(id));
    if (std::count(blocks.letters().begin(), blocks.letters().end(), s[0]) > 1)
      s += "#" + std::to_string(id);
    return s;
  };
  std::string out(to_string(a.kind));
  out += "(" + name(a.subject);
  if (a.has_target()) out += "," + name(a.target);
  return out + ")";
}

using Tower = std::vector<BlockId>;  // top to bottom

class WorldState {
 public:
  WorldState() : blocks_(std::make_shared<const BlockSet>()) {}

  /// Validates the invariants: every id exactly once, no empty tower.
  WorldState(std::shared_ptr<const BlockSet> blocks, std::vector<Tower> towers,
             std::optional<BlockId> held = std::nullopt)
      : blocks_(std::move(blocks)), towers_(std::move(towers)), held_(held) {
    validate();
  }

  static WorldState all_on_table(std::shared_ptr<const BlockSet> blocks) {
    std::vector<Tower> towers;
    for (std::size_t i = 0; i < blocks->size(); ++i) towers.push_back({static_cast<BlockId>(i)});
    return WorldState(std::move(blocks), std::move(towers));
  }

  const BlockSet& blocks() const noexcept { return *blocks_; }
  const std::shared_ptr<const BlockSet>& blocks_ptr() const noexcept { return blocks_; }
  const std::vector<Tower>& towers() const noexcept { return towers_; }
  std::optional<BlockId> held() const noexcept { return held_; }
  std::size_t block_count() const noexcept { return blocks_->size(); }

  /// Index of the tower holding `id`, or nullopt when held.
  std::optional<std::size_t> tower_of(BlockId id) const {
    for (std::size_t t = 0; t < towers_.size(); ++t)
      if (std::find(towers_[t].begin(), towers_[t].end(), id) != towers_[t].end()) return t;
    return std::nullopt;
  }

  friend bool operator==(const WorldState& a, const WorldState& b) {
    return a.towers_ == b.towers_ && a.held_ == b.held_ && *a.blocks_ == *b.blocks_;
  }

 private:
  friend WorldState apply(const WorldState&, const Action&);

  struct Unchecked {};
  WorldState(Unchecked, std::shared_ptr<const BlockSet> blocks, std::vector<Tower> towers,
             std::optional<BlockId> held)
      : blocks_(std::move(blocks)), towers_(std::move(towers)), held_(held) {}

  void validate() const {
    std::vector<int> seen(blocks_->size(), 0);
    auto mark = [&](BlockId id) {
      if (id >= seen.size()) throw InvalidState("unknown block id " + std::to_string(id));
      if (seen[id]++) throw InvalidState("block id " + std::to_string(id) + " appears twice");
    };
    for (const Tower& t : towers_) {
      if (t.empty()) throw InvalidState("empty tower");
      for (BlockId id : t) mark(id);
    }
    if (held_) mark(*held_);
    for (std::size_t i = 0; i < seen.size(); ++i)
      if (!seen[i]) throw InvalidState("block id " + std::to_string(i) + " is missing");
  }

  std::shared_ptr<const BlockSet> blocks_;
  std::vector<Tower> towers_;
  std::optional<BlockId> held_;
};

/// Letters of tower `index`, read top to bottom.
inline std::string tower_reading(const WorldState& s, std::size_t index) {
  if (index >= s.towers().size())
    throw InvalidArgument("tower index " + std::to_string(index) + " out of range");
  std::string out;
  for (BlockId id : s.towers()[index]) out += s.blocks().letter(id);
  return out;
}

inline bool goal_satisfied(const WorldState& s, const Word& goal) {
  if (s.held()) return false;
  for (std::size_t t = 0; t < s.towers().size(); ++t)
    if (s.towers()[t].size() == goal.size() && tower_reading(s, t) == goal.str()) return true;
  return false;
}

// ---------------------------------------------------------------------------
// Packed states
// ---------------------------------------------------------------------------

inline constexpr std::uint8_t kOnTable = 0xFE;
inline constexpr std::uint8_t kInHand = 0xFF;

/// Canonical form of a state: for every block, what it rests on. Tower
/// order is presentation-only, so two states differing only in tower order
/// pack identically.
struct PackedState {
  std::array<std::uint8_t, kMaxBlocks> below{};
  std::uint8_t count = 0;

  friend bool operator==(const PackedState& a, const PackedState& b) noexcept {
    return a.count == b.count && std::equal(a.below.begin(), a.below.begin() + a.count, b.below.begin());
  }

  std::optional<BlockId> held() const noexcept {
    for (std::uint8_t i = 0; i < count; ++i)
      if (below[i] == kInHand) return i;
    return std::nullopt;
  }

  /// above[b] = block resting on b, or kNoBlock.
  std::array<std::uint8_t, kMaxBlocks> above() const noexcept {
    std::array<std::uint8_t, kMaxBlocks> out;
    out.fill(kNoBlock);
    for (std::uint8_t i = 0; i < count; ++i)
      if (below[i] < kMaxBlocks) out[below[i]] = i;
    return out;
  }
};

struct PackedStateHash {
  std::size_t operator()(const PackedState& s) const noexcept {
    std::uint64_t h = 1469598103934665603ull;
    for (std::uint8_t i = 0; i < s.count; ++i) {
      h ^= s.below[i];
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

inline PackedState pack(const WorldState& s) {
  PackedState p;
  p.count = static_cast<std::uint8_t>(s.block_count());
  for (const Tower& t : s.towers()) {
    for (std::size_t i = 0; i + 1 < t.size(); ++i) p.below[t[i]] = t[i + 1];
    p.below[t.back()] = kOnTable;
  }
  if (s.held()) p.below[*s.held()] = kInHand;
  return p;
}

/// Towers come out ordered by bottom block id.
inline WorldState unpack(const PackedState& p, std::shared_ptr<const BlockSet> blocks) {
  auto above = p.above();
  std::vector<Tower> towers;
  for (std::uint8_t b = 0; b < p.count; ++b) {
    if (p.below[b] != kOnTable) continue;
    Tower bottom_up;
    for (std::uint8_t cur = b; cur != kNoBlock; cur = above[cur]) bottom_up.push_back(cur);
    towers.emplace_back(bottom_up.rbegin(), bottom_up.rend());
  }
  return WorldState(std::move(blocks), std::move(towers), p.held());
}

/// Legal actions in deterministic order (kind, then subject, then target).
inline std::vector<Action> legal_actions(const PackedState& p) {
  std::vector<Action> out;
  if (p.count == 0) return out;
  auto above = p.above();
  if (auto h = p.held()) {
    out.push_back(Action::put_down(*h));
    for (std::uint8_t b = 0; b < p.count; ++b)
      if (b != *h && above[b] == kNoBlock) out.push_back(Action::stack(*h, b));
    return out;
  }
  for (std::uint8_t b = 0; b < p.count; ++b)
    if (above[b] == kNoBlock && p.below[b] == kOnTable) out.push_back(Action::pick_up(b));
  for (std::uint8_t b = 0; b < p.count; ++b)
    if (above[b] == kNoBlock && p.below[b] < kMaxBlocks) out.push_back(Action::unstack(b, p.below[b]));
  return out;
}

inline std::vector<Action> legal_actions(const WorldState& s) { return legal_actions(pack(s)); }

/// Successor of a packed state; `a` must be legal.
inline PackedState apply_unchecked(PackedState p, const Action& a) noexcept {
  switch (a.kind) {
    case ActionKind::PickUp:
    case ActionKind::Unstack: p.below[a.subject] = kInHand; break;
    case ActionKind::PutDown: p.below[a.subject] = kOnTable; break;
    case ActionKind::Stack: p.below[a.subject] = a.target; break;
  }
  return p;
}

/// Successor state. Throws IllegalAction naming the violated precondition.
inline WorldState apply(const WorldState& s, const Action& a) {
  const auto n = s.block_count();
  auto fail = [&](const std::string& why) -> WorldState {
    throw IllegalAction(std::string(to_string(a.kind)) + ": " + why);
  };
  if (a.subject >= n) return fail("unknown block " + std::to_string(a.subject));
  if (a.has_target() && (a.target >= n || a.target == a.subject))
    return fail("bad target block " + std::to_string(a.target));

  std::vector<Tower> towers = s.towers();
  std::optional<BlockId> held = s.held();
  auto top_index = [&](BlockId id) -> std::optional<std::size_t> {
    for (std::size_t t = 0; t < towers.size(); ++t)
      if (towers[t].front() == id) return t;
    return std::nullopt;
  };

  switch (a.kind) {
    case ActionKind::PickUp: {
      if (held) return fail("hand is not empty");
      auto t = top_index(a.subject);
      if (!t) return fail("block is not clear");
      if (towers[*t].size() != 1) return fail("block is not on the table");
      towers.erase(towers.begin() + static_cast<std::ptrdiff_t>(*t));
      held = a.subject;
      break;
    }
    case ActionKind::Unstack: {
      if (held) return fail("hand is not empty");
      auto t = top_index(a.subject);
      if (!t) return fail("block is not clear");
      if (towers[*t].size() < 2 || towers[*t][1] != a.target) return fail("block is not on the named block");
      towers[*t].erase(towers[*t].begin());
      held = a.subject;
      break;
    }
    case ActionKind::PutDown: {
      if (held != a.subject) return fail("block is not held");
      towers.push_back({a.subject});
      held.reset();
      break;
    }
    case ActionKind::Stack: {
      if (held != a.subject) return fail("block is not held");
      auto t = top_index(a.target);
      if (!t) return fail("target is not clear");
      towers[*t].insert(towers[*t].begin(), a.subject);
      held.reset();
      break;
    }
  }
  return WorldState(WorldState::Unchecked{}, s.blocks_ptr(), std::move(towers), held);
}

/// Letters of every block in the state.
inline LetterCounts letters(const WorldState& s) { return s.blocks().counts(); }

}  // namespace blockwords
