#pragma once

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "blockwords/error.hpp"
#include "blockwords/world.hpp"

namespace blockwords {

struct LexiconEntry {
  std::string word;
  double frequency;
};

/// Dictionary of goal words with raw corpus frequencies.
class Lexicon {
 public:
  Lexicon() = default;

  Lexicon(std::initializer_list<LexiconEntry> entries) {
    for (const auto& e : entries) add(e.word, e.frequency);
  }

  /// Repeated words accumulate their frequencies.
  void add(std::string_view word, double frequency) {
    if (!Word::is_valid(word)) throw InvalidWord("lexicon word must be 3-8 lowercase letters: \"" + std::string(word) + "\"");
    if (!(frequency > 0.0) || !std::isfinite(frequency))
      throw InvalidArgument("frequency of \"" + std::string(word) + "\" must be positive");
    auto [it, inserted] = index_.try_emplace(std::string(word), entries_.size());
    if (inserted)
      entries_.push_back({std::string(word), frequency});
    else
      entries_[it->second].frequency += frequency;
  }

  /// Parses `word<TAB>frequency` lines (or bare words, frequency 1). Lines
  /// starting with '#' are comments. Words outside 3-8 lowercase letters are
  /// skipped and counted; a malformed frequency is a ParseError.
  static Lexicon parse(std::istream& in, const std::string& source = "<dictionary>") {
    Lexicon lex;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      std::string word;
      double freq = 1.0;
      auto tab = line.find('\t');
      if (tab == std::string::npos) {
        word = line;
      } else {
        word = line.substr(0, tab);
        std::string num = line.substr(tab + 1);
        char* end = nullptr;
        errno = 0;
        freq = std::strtod(num.c_str(), &end);
        if (num.empty() || end == num.c_str() || *end != '\0' || errno == ERANGE)
          throw ParseError(source, lineno, "bad frequency \"" + num + "\"");
        if (!(freq > 0.0)) throw ParseError(source, lineno, "frequency must be positive");
      }
      if (!Word::is_valid(word)) {
        ++lex.skipped_;
        continue;
      }
      lex.add(word, freq);
    }
    return lex;
  }

  static Lexicon load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path.string(), 0, "cannot open dictionary");
    return parse(in, path.string());
  }

  const std::vector<LexiconEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::size_t skipped() const noexcept { return skipped_; }

  const LexiconEntry* find(std::string_view word) const {
    auto it = index_.find(std::string(word));
    return it == index_.end() ? nullptr : &entries_[it->second];
  }

 private:
  std::vector<LexiconEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t skipped_ = 0;
};

/// weight_i ∝ frequency_i^(1/temperature), normalized to sum to one.
inline std::vector<double> temper(std::span<const double> frequencies, double temperature) {
  if (!(temperature >= 1.0)) throw InvalidArgument("temperature must be >= 1");
  std::vector<double> out(frequencies.size());
  if (frequencies.empty()) return out;
  double max_log = -INFINITY;
  for (double f : frequencies) {
    if (!(f > 0.0) || !std::isfinite(f)) throw InvalidArgument("frequencies must be positive and finite");
    max_log = std::max(max_log, std::log(f));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < frequencies.size(); ++i) {
    out[i] = std::exp((std::log(frequencies[i]) - max_log) / temperature);
    total += out[i];
  }
  for (double& w : out) w /= total;
  return out;
}

/// Goal prior restricted to the words a scenario's blocks can spell.
class GoalPrior {
 public:
  GoalPrior() = default;

  GoalPrior(std::vector<std::string> words, std::vector<double> probs, double temperature)
      : words_(std::move(words)), probs_(std::move(probs)), temperature_(temperature) {
    for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], i);
  }

  std::size_t size() const noexcept { return words_.size(); }
  const std::vector<std::string>& words() const noexcept { return words_; }
  const std::vector<double>& probs() const noexcept { return probs_; }
  double temperature() const noexcept { return temperature_; }

  double prob(std::string_view word) const {
    auto it = index_.find(std::string(word));
    return it == index_.end() ? 0.0 : probs_[it->second];
  }

  std::optional<std::size_t> index_of(std::string_view word) const {
    auto it = index_.find(std::string(word));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::vector<std::string> words_;
  std::vector<double> probs_;
  double temperature_ = 1.0;
  std::unordered_map<std::string, std::size_t> index_;
};

inline GoalPrior goal_prior(const Lexicon& lexicon, const LetterCounts& blocks, double temperature) {
  std::vector<std::string> words;
  std::vector<double> freqs;
  for (const auto& e : lexicon.entries()) {
    if (blocks.contains(LetterCounts::of(e.word))) {
      words.push_back(e.word);
      freqs.push_back(e.frequency);
    }
  }
  if (words.empty()) throw EmptySupport("no dictionary word can be spelled from the available blocks");
  auto probs = temper(freqs, temperature);
  return GoalPrior(std::move(words), std::move(probs), temperature);
}

}  // namespace blockwords
