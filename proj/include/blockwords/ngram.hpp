#pragma once

// Reversed character n-gram. Words are generated last letter first, because
// a tower reading is a word suffix and stacking prepends letters.
//
// Seen contexts use maximum-likelihood estimates; unseen contexts back off
// to shorter ones, and the empty context carries add-delta smoothing over
// {a-z, END}. After at least one emitted letter, END gets an extra
// epsilon of mass ("termination bias") and letters are scaled by 1-epsilon.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "blockwords/error.hpp"
#include "blockwords/lexicon.hpp"
#include "json.hpp"

namespace blockwords {

inline constexpr int kEnd = 26;
inline constexpr int kSymbols = 27;
inline constexpr char kPad = '^';

using SymbolDist = std::array<double, kSymbols>;

class CharNGram {
 public:
  static constexpr int kDefaultOrder = 5;
  static constexpr double kDefaultEpsilon = 0.05;
  static constexpr double kDefaultSmoothing = 0.01;

  explicit CharNGram(int order = kDefaultOrder, double epsilon = kDefaultEpsilon,
                     double smoothing = kDefaultSmoothing)
      : order_(order), epsilon_(epsilon), smoothing_(smoothing) {
    if (order < 1) throw InvalidArgument("n-gram order must be >= 1");
    if (!(epsilon >= 0.0 && epsilon < 1.0)) throw InvalidArgument("termination bias must be in [0, 1)");
    if (!(smoothing > 0.0)) throw InvalidArgument("smoothing must be positive");
  }

  int order() const noexcept { return order_; }
  double epsilon() const noexcept { return epsilon_; }
  double smoothing() const noexcept { return smoothing_; }
  std::size_t context_count() const noexcept { return rows_.size(); }

  /// Adds one weighted training word (normal orientation).
  void observe(std::string_view word, double weight) {
    std::string emitted;
    for (std::size_t i = 0; i <= word.size(); ++i) {
      int sym = i < word.size() ? letter_index(word[word.size() - 1 - i]) : kEnd;
      for (std::size_t len = 0; len < static_cast<std::size_t>(order_); ++len) {
        Row& row = rows_[context_key(emitted, len)];
        row.counts[sym] += weight;
        row.total += weight;
      }
      if (i < word.size()) emitted += word[word.size() - 1 - i];
    }
  }

  /// Distribution of the next symbol, before the termination bias, given the
  /// letters emitted so far (in generation order, i.e. the suffix reversed).
  /// `max_context` caps the context length used.
  SymbolDist base_distribution(std::string_view emitted, std::size_t max_context = SIZE_MAX) const {
    std::size_t len = std::min<std::size_t>(max_context, static_cast<std::size_t>(order_ - 1));
    for (; len > 0; --len) {
      auto it = rows_.find(context_key(emitted, len));
      if (it != rows_.end() && it->second.total > 0.0) {
        SymbolDist d;
        for (int s = 0; s < kSymbols; ++s) d[s] = it->second.counts[s] / it->second.total;
        return d;
      }
    }
    SymbolDist d;
    auto it = rows_.find(std::string());
    const double total = it == rows_.end() ? 0.0 : it->second.total;
    for (int s = 0; s < kSymbols; ++s) {
      double c = it == rows_.end() ? 0.0 : it->second.counts[s];
      d[s] = (c + smoothing_) / (total + kSymbols * smoothing_);
    }
    return d;
  }

  /// Next-symbol distribution including the termination bias.
  SymbolDist distribution(std::string_view emitted, std::size_t max_context = SIZE_MAX) const {
    SymbolDist d = base_distribution(emitted, max_context);
    if (!emitted.empty() && epsilon_ > 0.0) {
      for (double& p : d) p *= 1.0 - epsilon_;
      d[kEnd] += epsilon_;
    }
    return d;
  }

  /// Probability of generating `suffix` (right to left), without END.
  double sequence_prob(std::string_view suffix) const {
    if (!std::all_of(suffix.begin(), suffix.end(), is_letter))
      throw InvalidArgument("sequence_prob expects lowercase letters");
    std::string emitted;
    double p = 1.0;
    for (std::size_t i = suffix.size(); i-- > 0;) {
      p *= distribution(emitted)[letter_index(suffix[i])];
      emitted += suffix[i];
      if (p == 0.0) break;
    }
    return p;
  }

  nlohmann::json to_json() const {
    nlohmann::json ctx = nlohmann::json::object();
    for (const auto& [key, row] : rows_) ctx[key] = row.counts;
    return {{"format", "blockwords-ngram"}, {"v", 1}, {"order", order_},
            {"epsilon", epsilon_}, {"smoothing", smoothing_}, {"contexts", ctx}};
  }

  static CharNGram from_json(const nlohmann::json& j) {
    try {
      if (j.at("format").get<std::string>() != "blockwords-ngram") throw InvalidArgument("not an n-gram file");
      CharNGram m(j.at("order").get<int>(), j.at("epsilon").get<double>(), j.at("smoothing").get<double>());
      for (const auto& [key, counts] : j.at("contexts").items()) {
        Row row;
        auto v = counts.get<std::vector<double>>();
        if (v.size() != kSymbols) throw InvalidArgument("context row must have 27 entries");
        std::copy(v.begin(), v.end(), row.counts.begin());
        for (double c : v) row.total += c;
        m.rows_.emplace(key, row);
      }
      return m;
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument(std::string("n-gram json: ") + e.what());
    }
  }

 private:
  struct Row {
    std::array<double, kSymbols> counts{};
    double total = 0.0;
  };

  std::string context_key(std::string_view emitted, std::size_t len) const {
    std::string key;
    key.reserve(len);
    const std::size_t pad = len > emitted.size() ? len - emitted.size() : 0;
    key.append(pad, kPad);
    key.append(emitted.substr(emitted.size() - (len - pad)));
    return key;
  }

  int order_;
  double epsilon_;
  double smoothing_;
  std::unordered_map<std::string, Row> rows_;
};

/// Fits the n-gram on tempered lexicon frequencies (the same weights the
/// goal prior uses).
inline CharNGram train_ngram(const Lexicon& lexicon, int order = CharNGram::kDefaultOrder,
                             double temperature = 4.0, double epsilon = CharNGram::kDefaultEpsilon) {
  if (lexicon.empty()) throw EmptySupport("cannot train an n-gram on an empty lexicon");
  std::vector<double> freqs;
  freqs.reserve(lexicon.size());
  for (const auto& e : lexicon.entries()) freqs.push_back(e.frequency);
  auto weights = temper(freqs, temperature);
  CharNGram model(order, epsilon);
  for (std::size_t i = 0; i < weights.size(); ++i) model.observe(lexicon.entries()[i].word, weights[i]);
  return model;
}

}  // namespace blockwords
