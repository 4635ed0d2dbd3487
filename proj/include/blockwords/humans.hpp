#pragma once

// Human guess lists per participant, scenario and judgment point: the
// native JSON format, an adapter for long-format CSV exports, the two
// exclusion rules, and the per-judgment average distribution.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "blockwords/error.hpp"
#include "blockwords/metrics.hpp"
#include "blockwords/scenario.hpp"
#include "json.hpp"

namespace blockwords {

/// One participant's guess lists for one scenario, one list per judgment
/// point, each as it stood after any adds and removals.
struct ParticipantResponse {
  std::string participant;
  std::vector<std::vector<std::string>> judgments;
};

/// scenario id -> responses, in file order.
struct HumanData {
  std::map<std::string, std::vector<ParticipantResponse>> scenarios;

  bool empty() const noexcept { return scenarios.empty(); }
  const std::vector<ParticipantResponse>* find(const std::string& scenario) const {
    auto it = scenarios.find(scenario);
    return it == scenarios.end() ? nullptr : &it->second;
  }
};

/// Never changed the guess list after the first judgment point.
inline bool never_updated(const ParticipantResponse& r) {
  auto as_set = [](const std::vector<std::string>& g) { return std::set<std::string>(g.begin(), g.end()); };
  for (const auto& g : r.judgments)
    if (as_set(g) != as_set(r.judgments.front())) return false;
  return true;
}

/// Only ever added guesses: every list contains the previous one.
inline bool add_only(const ParticipantResponse& r) {
  for (std::size_t i = 1; i < r.judgments.size(); ++i) {
    std::set<std::string> now(r.judgments[i].begin(), r.judgments[i].end());
    for (const auto& g : r.judgments[i - 1])
      if (!now.count(g)) return false;
  }
  return true;
}

struct ExclusionRules {
  bool drop_never_updated = true;
  bool drop_add_only = true;
};

inline HumanData apply_exclusions(const HumanData& data, ExclusionRules rules) {
  HumanData out;
  for (const auto& [id, responses] : data.scenarios) {
    auto& kept = out.scenarios[id];
    for (const auto& r : responses) {
      if (rules.drop_never_updated && never_updated(r)) continue;
      if (rules.drop_add_only && add_only(r)) continue;
      kept.push_back(r);
    }
  }
  return out;
}

/// Checks list counts and every guess against the scenario's blocks.
inline void validate(const HumanData& data, const std::vector<Scenario>& scenarios) {
  for (const auto& [id, responses] : data.scenarios) {
    auto sc = std::find_if(scenarios.begin(), scenarios.end(), [&](const Scenario& s) { return s.id == id; });
    if (sc == scenarios.end()) throw InvalidArgument("human data refers to unknown scenario \"" + id + "\"");
    for (const auto& r : responses) {
      if (r.judgments.size() != sc->judgments.size())
        throw InvalidArgument(id + "/" + r.participant + ": expected " + std::to_string(sc->judgments.size()) +
                              " judgment lists, got " + std::to_string(r.judgments.size()));
      for (const auto& list : r.judgments)
        for (const auto& g : list) {
          try {
            validate_guess(g, sc->blocks->counts());
          } catch (const InvalidWord& e) {
            throw InvalidArgument(id + "/" + r.participant + ": " + e.what());
          }
        }
    }
  }
}

/// Mean over participants of their 1/n guess distributions, one per
/// judgment point. Participants with an empty list are skipped at that point.
inline std::vector<Distribution> average_human_distributions(const std::vector<ParticipantResponse>& responses,
                                                             std::size_t judgments) {
  std::vector<Distribution> out(judgments);
  for (std::size_t j = 0; j < judgments; ++j) {
    std::size_t n = 0;
    for (const auto& r : responses) {
      if (j >= r.judgments.size() || r.judgments[j].empty()) continue;
      ++n;
      for (const auto& [w, p] : human_distribution(r.judgments[j])) out[j][w] += p;
    }
    for (auto& [w, p] : out[j]) p /= static_cast<double>(n);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Native JSON format
// ---------------------------------------------------------------------------
//
// {"v": 1, "responses": [{"scenario": "pink", "participant": "h01",
//   "judgments": [["ink"], ["ink", "pink"]]}, ...]}

inline HumanData human_data_from_json(const nlohmann::json& j) {
  try {
    if (j.value("v", 1) != 1) throw InvalidArgument("v: unsupported version");
    HumanData d;
    const auto& rs = j.at("responses");
    for (std::size_t i = 0; i < rs.size(); ++i) {
      ParticipantResponse r;
      r.participant = rs[i].at("participant").get<std::string>();
      r.judgments = rs[i].at("judgments").get<std::vector<std::vector<std::string>>>();
      d.scenarios[rs[i].at("scenario").get<std::string>()].push_back(std::move(r));
    }
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("human data: ") + e.what());
  }
}

inline nlohmann::ordered_json to_json(const HumanData& d) {
  nlohmann::ordered_json rs = nlohmann::ordered_json::array();
  for (const auto& [id, responses] : d.scenarios)
    for (const auto& r : responses)
      rs.push_back({{"scenario", id}, {"participant", r.participant}, {"judgments", r.judgments}});
  return {{"v", 1}, {"responses", rs}};
}

// ---------------------------------------------------------------------------
// Long-format CSV adapter
// ---------------------------------------------------------------------------
//
// One row per participant, scenario and judgment point. Columns are found
// by header name (case-insensitive, first match among the aliases):
//   participant: participant, participant_id, worker_id, subject
//   scenario:    scenario, scenario_id, problem, problem_id
//   judgment:    judgment, judgment_index, timestep, step
//   guesses:     guesses, goals, responses
// Guesses are separated by ';', '|', ',' or spaces. Judgment values are
// ordinal: rows are sorted by them and renumbered from 0.

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline std::vector<std::string> split_guesses(const std::string& field) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : field) {
    if (c == ';' || c == '|' || c == ',' || std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(lower(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(lower(cur));
  return out;
}

}  // namespace detail

inline HumanData import_long_csv(std::istream& in, const std::string& source = "<csv>") {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(source, 1, "empty file");
  auto header = detail::split_csv_line(line);
  auto column = [&](std::initializer_list<const char*> names) -> std::size_t {
    for (const char* n : names)
      for (std::size_t i = 0; i < header.size(); ++i)
        if (detail::lower(header[i]) == n) return i;
    throw ParseError(source, 1, std::string("missing column \"") + *names.begin() + "\"");
  };
  const std::size_t cp = column({"participant", "participant_id", "worker_id", "subject"});
  const std::size_t cs = column({"scenario", "scenario_id", "problem", "problem_id"});
  const std::size_t cj = column({"judgment", "judgment_index", "timestep", "step"});
  const std::size_t cg = column({"guesses", "goals", "responses"});

  // (scenario, participant) -> judgment value -> guesses
  std::map<std::pair<std::string, std::string>, std::map<double, std::vector<std::string>>> rows;
  std::vector<std::pair<std::string, std::string>> order;
  for (std::size_t n = 2; std::getline(in, line); ++n) {
    if (line.empty() || line == "\r") continue;
    auto f = detail::split_csv_line(line);
    if (f.size() < header.size()) throw ParseError(source, n, "expected " + std::to_string(header.size()) + " fields");
    double j = 0.0;
    try {
      j = std::stod(f[cj]);
    } catch (const std::exception&) {
      throw ParseError(source, n, "judgment is not a number: \"" + f[cj] + "\"");
    }
    auto key = std::make_pair(f[cs], f[cp]);
    if (!rows.count(key)) order.push_back(key);
    auto [it, fresh] = rows[key].try_emplace(j, detail::split_guesses(f[cg]));
    if (!fresh) throw ParseError(source, n, "duplicate judgment for " + f[cp] + " in " + f[cs]);
  }
  HumanData d;
  for (const auto& key : order) {
    ParticipantResponse r;
    r.participant = key.second;
    for (auto& [j, g] : rows[key]) r.judgments.push_back(g);
    d.scenarios[key.first].push_back(std::move(r));
  }
  return d;
}

/// Loads .json (native) or .csv (long format) by extension.
inline HumanData load_human_data(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  if (path.extension() == ".csv") return import_long_csv(in, path.string());
  try {
    return human_data_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

}  // namespace blockwords
