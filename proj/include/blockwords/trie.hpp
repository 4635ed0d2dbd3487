#pragma once

// Dictionary trie over reversed words, and n-gram completion of tower
// readings constrained to dictionary words spellable from the free blocks.

#include <algorithm>
#include <array>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "blockwords/error.hpp"
#include "blockwords/ngram.hpp"
#include "blockwords/rng.hpp"
#include "blockwords/world.hpp"

namespace blockwords {

/// Trie keyed by words read right to left, so every node is a word suffix.
class SuffixTrie {
 public:
  static constexpr int kNone = -1;

  SuffixTrie() : nodes_(1) {}

  explicit SuffixTrie(std::vector<std::string> words) : nodes_(1), words_(std::move(words)) {
    for (std::size_t w = 0; w < words_.size(); ++w) {
      const std::string& word = words_[w];
      int node = 0;
      for (auto it = word.rbegin(); it != word.rend(); ++it) {
        int c = letter_index(*it);
        if (nodes_[node].next[c] == kNone) {
          nodes_[node].next[c] = static_cast<int>(nodes_.size());
          nodes_.emplace_back();
        }
        node = nodes_[node].next[c];
      }
      if (nodes_[node].word == kNone) nodes_[node].word = static_cast<int>(w);
    }
  }

  int root() const noexcept { return 0; }
  int child(int node, int letter) const noexcept { return nodes_[node].next[letter]; }
  int word_at(int node) const noexcept { return nodes_[node].word; }
  const std::vector<std::string>& words() const noexcept { return words_; }
  std::size_t node_count() const noexcept { return nodes_.size(); }

  /// Node reached by reading `suffix` right to left, or kNone.
  int find(std::string_view suffix) const noexcept {
    int node = 0;
    for (auto it = suffix.rbegin(); it != suffix.rend() && node != kNone; ++it) {
      if (!is_letter(*it)) return kNone;
      node = nodes_[node].next[letter_index(*it)];
    }
    return node;
  }

  bool contains(std::string_view word) const noexcept {
    int node = find(word);
    return node != kNone && nodes_[node].word != kNone;
  }

  /// Whether some word below `node` needs only letters from `available`.
  bool completable(int node, LetterCounts available) const {
    if (nodes_[node].word != kNone) return true;
    for (int c = 0; c < 26; ++c) {
      int next = nodes_[node].next[c];
      if (next == kNone || available.n[c] == 0) continue;
      --available.n[c];
      if (completable(next, available)) return true;
      ++available.n[c];
    }
    return false;
  }

 private:
  struct Node {
    Node() { next.fill(kNone); }
    std::array<int, 26> next;
    int word = kNone;
  };

  std::vector<Node> nodes_;
  std::vector<std::string> words_;
};

struct Completion {
  std::string word;
  double prob;  // product of the renormalized per-step conditionals
};

struct CompletionOption {
  int symbol;  // letter index or kEnd
  double prob;
};

/// Feasible next symbols at `node` with their renormalized n-gram
/// probabilities. END is feasible only when the current string is a word.
/// If every feasible symbol has zero mass under the full context, shorter
/// contexts are tried; the smoothed empty context always has mass.
inline std::vector<CompletionOption> completion_options(const CharNGram& ngram, const SuffixTrie& trie, int node,
                                                        std::string_view emitted, const LetterCounts& available) {
  std::vector<CompletionOption> opts;
  if (trie.word_at(node) != SuffixTrie::kNone) opts.push_back({kEnd, 0.0});
  for (int c = 0; c < 26; ++c) {
    int next = trie.child(node, c);
    if (next == SuffixTrie::kNone || available.n[c] == 0) continue;
    LetterCounts rest = available;
    --rest.n[c];
    if (trie.completable(next, rest)) opts.push_back({c, 0.0});
  }
  if (opts.empty()) return opts;
  for (std::size_t ctx = static_cast<std::size_t>(ngram.order()); ; --ctx) {
    SymbolDist d = ngram.distribution(emitted, ctx);
    double mass = 0.0;
    for (auto& o : opts) mass += (o.prob = d[o.symbol]);
    if (mass > 0.0) {
      for (auto& o : opts) o.prob /= mass;
      return opts;
    }
    if (ctx == 0) break;
  }
  for (auto& o : opts) o.prob = 1.0 / static_cast<double>(opts.size());
  return opts;
}

/// Letters in generation order (right to left).
inline std::string reversed(std::string_view s) { return std::string(s.rbegin(), s.rend()); }

/// Samples a dictionary word ending in `tower_reading` by prepending letters
/// drawn from `available`. Returns the word and the exact probability of the
/// sampled path.
template <class Rng>
Completion sample_completion(const CharNGram& ngram, std::string_view tower_reading, const LetterCounts& available,
                             const SuffixTrie& trie, Rng& rng) {
  int node = trie.find(tower_reading);
  if (node == SuffixTrie::kNone || !trie.completable(node, available))
    throw InfeasibleCompletion("no dictionary word completes \"" + std::string(tower_reading) + "\"");
  std::string emitted = reversed(tower_reading);
  LetterCounts avail = available;
  double q = 1.0;
  std::vector<double> weights;
  while (true) {
    auto opts = completion_options(ngram, trie, node, emitted, avail);
    weights.clear();
    for (const auto& o : opts) weights.push_back(o.prob);
    const auto& pick = opts[sample_index(weights, rng)];
    q *= pick.prob;
    if (pick.symbol == kEnd) return {trie.words()[static_cast<std::size_t>(trie.word_at(node))], q};
    emitted += static_cast<char>('a' + pick.symbol);
    --avail.n[pick.symbol];
    node = trie.child(node, pick.symbol);
  }
}

/// Probability that sample_completion returns `word`; 0 when unreachable.
inline double completion_prob(const CharNGram& ngram, std::string_view tower_reading, const LetterCounts& available,
                              const SuffixTrie& trie, std::string_view word) {
  if (word.size() < tower_reading.size() || word.substr(word.size() - tower_reading.size()) != tower_reading)
    return 0.0;
  int node = trie.find(tower_reading);
  if (node == SuffixTrie::kNone || !trie.completable(node, available)) return 0.0;
  std::string emitted = reversed(tower_reading);
  LetterCounts avail = available;
  double q = 1.0;
  for (std::size_t i = tower_reading.size(); ; ++i) {
    auto opts = completion_options(ngram, trie, node, emitted, avail);
    const int want = i == word.size() ? kEnd : letter_index(word[word.size() - 1 - i]);
    auto it = std::find_if(opts.begin(), opts.end(), [&](const CompletionOption& o) { return o.symbol == want; });
    if (it == opts.end()) return 0.0;
    q *= it->prob;
    if (want == kEnd) return q;
    emitted += static_cast<char>('a' + want);
    --avail.n[want];
    node = trie.child(node, want);
  }
}

/// Every word sample_completion can return, with its probability.
inline std::vector<Completion> enumerate_completions(const CharNGram& ngram, std::string_view tower_reading,
                                                     const LetterCounts& available, const SuffixTrie& trie) {
  std::vector<Completion> out;
  int node = trie.find(tower_reading);
  if (node == SuffixTrie::kNone || !trie.completable(node, available)) return out;
  std::string emitted = reversed(tower_reading);
  auto walk = [&](auto&& self, int at, LetterCounts avail, double q) -> void {
    for (const auto& o : completion_options(ngram, trie, at, emitted, avail)) {
      if (o.symbol == kEnd) {
        out.push_back({trie.words()[static_cast<std::size_t>(trie.word_at(at))], q * o.prob});
        continue;
      }
      LetterCounts rest = avail;
      --rest.n[o.symbol];
      emitted += static_cast<char>('a' + o.symbol);
      self(self, trie.child(at, o.symbol), rest, q * o.prob);
      emitted.pop_back();
    }
  };
  walk(walk, node, available, 1.0);
  return out;
}

}  // namespace blockwords
