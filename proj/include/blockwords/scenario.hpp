#pragma once

// Scenario files: an initial block layout, an observed action trace, the
// steps at which goal judgments are recorded, and the true word.
//
// Blocks are named by letter; a repeated letter is disambiguated with its
// id, as in "o#3". Actions use the same names: "stack(i,n)", "pick-up(k)".
// The canonical form is two-space indented JSON with a fixed key order, so
// saving a loaded canonical file reproduces it byte for byte.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "blockwords/error.hpp"
#include "blockwords/inference.hpp"
#include "blockwords/world.hpp"
#include "json.hpp"

namespace blockwords {

enum class Condition : std::uint8_t { BottomUpFriendly, IrrationalAlternatives, GardenPath, UncommonWords };

inline std::string_view to_string(Condition c) noexcept {
  switch (c) {
    case Condition::BottomUpFriendly: return "bottom_up_friendly";
    case Condition::IrrationalAlternatives: return "irrational_alternatives";
    case Condition::GardenPath: return "garden_path";
    case Condition::UncommonWords: return "uncommon_words";
  }
  return "?";
}

inline std::optional<Condition> parse_condition(std::string_view s) noexcept {
  for (Condition c : {Condition::BottomUpFriendly, Condition::IrrationalAlternatives, Condition::GardenPath,
                      Condition::UncommonWords})
    if (to_string(c) == s) return c;
  return std::nullopt;
}

/// "p", or "p#3" when the letter occurs more than once.
inline std::string block_name(const BlockSet& blocks, BlockId id) {
  std::string s(1, blocks.letter(id));
  if (std::count(blocks.letters().begin(), blocks.letters().end(), s[0]) > 1) s += "#" + std::to_string(id);
  return s;
}

/// Inverse of block_name. A bare letter must be unique among the blocks.
inline BlockId parse_block_name(const BlockSet& blocks, std::string_view name) {
  auto bad = [&](const std::string& why) { return InvalidArgument("block \"" + std::string(name) + "\": " + why); };
  if (name.empty() || !is_letter(name[0])) throw bad("expected a letter");
  const char letter = name[0];
  if (name.size() == 1) {
    const auto n = std::count(blocks.letters().begin(), blocks.letters().end(), letter);
    if (n == 0) throw bad("no such block");
    if (n > 1) throw bad("letter is repeated; name the block as letter#id");
    return static_cast<BlockId>(blocks.letters().find(letter));
  }
  if (name[1] != '#' || name.size() < 3) throw bad("expected letter or letter#id");
  std::size_t id = 0;
  for (char c : name.substr(2)) {
    if (c < '0' || c > '9') throw bad("id must be a number");
    id = id * 10 + static_cast<std::size_t>(c - '0');
    if (id >= blocks.size()) throw bad("id out of range");
  }
  if (blocks.letter(static_cast<BlockId>(id)) != letter) throw bad("letter does not match the block id");
  return static_cast<BlockId>(id);
}

/// Inverse of describe().
inline Action parse_action(const BlockSet& blocks, std::string_view text) {
  auto bad = [&](const std::string& why) { return InvalidArgument("action \"" + std::string(text) + "\": " + why); };
  const auto open = text.find('(');
  if (open == std::string_view::npos || text.back() != ')') throw bad("expected kind(block[,block])");
  auto kind = parse_action_kind(text.substr(0, open));
  if (!kind) throw bad("unknown action kind");
  std::string_view args = text.substr(open + 1, text.size() - open - 2);
  const auto comma = args.find(',');
  Action a{*kind, parse_block_name(blocks, args.substr(0, comma)), kNoBlock};
  if (a.has_target() != (comma != std::string_view::npos))
    throw bad(a.has_target() ? "needs two blocks" : "takes one block");
  if (a.has_target()) a.target = parse_block_name(blocks, args.substr(comma + 1));
  return a;
}

struct Scenario {
  std::string id;
  Condition condition = Condition::BottomUpFriendly;
  bool reconstructed = false;
  std::string description;
  std::shared_ptr<const BlockSet> blocks;
  WorldState initial;
  std::vector<Action> actions;
  std::vector<std::size_t> judgments;
  std::string true_word;

  ObservedTrace trace() const { return ObservedTrace(initial, actions); }
};

/// Checks legality of the trace, spellability of the true word and the
/// judgment indices. Throws InvalidArgument naming the field.
inline void validate(const Scenario& s) {
  if (s.id.empty()) throw InvalidArgument("id: must not be empty");
  if (!Word::is_valid(s.true_word)) throw InvalidArgument("true_word: must be 3-8 lowercase letters");
  if (!spellable(s.true_word, s.blocks->counts()))
    throw InvalidArgument("true_word: \"" + s.true_word + "\" cannot be spelled from the blocks");
  WorldState cur = s.initial;
  for (std::size_t i = 0; i < s.actions.size(); ++i) {
    try {
      cur = apply(cur, s.actions[i]);
    } catch (const IllegalAction& e) {
      throw InvalidArgument("actions[" + std::to_string(i) + "]: " + e.what());
    }
  }
  for (std::size_t i = 0; i < s.judgments.size(); ++i) {
    if (s.judgments[i] > s.actions.size())
      throw InvalidArgument("judgments[" + std::to_string(i) + "]: step " + std::to_string(s.judgments[i]) +
                            " is beyond the trace (" + std::to_string(s.actions.size()) + " actions)");
    if (i > 0 && s.judgments[i] <= s.judgments[i - 1])
      throw InvalidArgument("judgments[" + std::to_string(i) + "]: indices must be strictly increasing");
  }
}

inline nlohmann::ordered_json to_json(const Scenario& s) {
  using oj = nlohmann::ordered_json;
  const BlockSet& b = *s.blocks;
  oj blocks = oj::array();
  for (char c : b.letters()) blocks.push_back(std::string(1, c));
  oj towers = oj::array();
  for (const Tower& t : s.initial.towers()) {
    oj tower = oj::array();
    for (BlockId id : t) tower.push_back(block_name(b, id));
    towers.push_back(tower);
  }
  oj actions = oj::array();
  for (const Action& a : s.actions) actions.push_back(describe(a, b));
  oj j;
  j["v"] = 1;
  j["id"] = s.id;
  j["condition"] = to_string(s.condition);
  j["reconstructed"] = s.reconstructed;
  j["description"] = s.description;
  j["blocks"] = blocks;
  j["towers"] = towers;
  j["held"] = s.initial.held() ? oj(block_name(b, *s.initial.held())) : oj(nullptr);
  j["actions"] = actions;
  j["judgments"] = s.judgments;
  j["true_word"] = s.true_word;
  return j;
}

inline std::string to_canonical_text(const Scenario& s) { return to_json(s).dump(2) + "\n"; }

inline Scenario scenario_from_json(const nlohmann::json& j) {
  auto field = [&](const char* name) -> const nlohmann::json& {
    if (!j.contains(name)) throw InvalidArgument(std::string(name) + ": missing");
    return j.at(name);
  };
  auto str = [&](const char* name) {
    const auto& v = field(name);
    if (!v.is_string()) throw InvalidArgument(std::string(name) + ": expected a string");
    return v.get<std::string>();
  };
  if (!j.is_object()) throw InvalidArgument("scenario must be a JSON object");
  if (j.contains("v") && j.at("v") != 1) throw InvalidArgument("v: unsupported version");

  Scenario s;
  s.id = str("id");
  auto cond = parse_condition(str("condition"));
  if (!cond) throw InvalidArgument("condition: unknown tag \"" + str("condition") + "\"");
  s.condition = *cond;
  s.reconstructed = j.value("reconstructed", false);
  s.description = j.value("description", std::string());

  std::string letters;
  const auto& blocks = field("blocks");
  if (!blocks.is_array() || blocks.empty()) throw InvalidArgument("blocks: expected a non-empty array of letters");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    if (!b.is_string() || b.get<std::string>().size() != 1 || !is_letter(b.get<std::string>()[0]))
      throw InvalidArgument("blocks[" + std::to_string(i) + "]: expected a single lowercase letter");
    letters += b.get<std::string>();
  }
  try {
    s.blocks = std::make_shared<const BlockSet>(letters);
  } catch (const Error& e) {
    throw InvalidArgument(std::string("blocks: ") + e.what());
  }

  std::vector<Tower> towers;
  const auto& tj = field("towers");
  if (!tj.is_array()) throw InvalidArgument("towers: expected an array of towers");
  for (std::size_t t = 0; t < tj.size(); ++t) {
    const std::string where = "towers[" + std::to_string(t) + "]";
    if (!tj[t].is_array()) throw InvalidArgument(where + ": expected an array of block names");
    Tower tower;
    for (std::size_t k = 0; k < tj[t].size(); ++k) {
      if (!tj[t][k].is_string()) throw InvalidArgument(where + "[" + std::to_string(k) + "]: expected a block name");
      try {
        tower.push_back(parse_block_name(*s.blocks, tj[t][k].get<std::string>()));
      } catch (const InvalidArgument& e) {
        throw InvalidArgument(where + "[" + std::to_string(k) + "]: " + e.what());
      }
    }
    towers.push_back(std::move(tower));
  }
  std::optional<BlockId> held;
  if (j.contains("held") && !j.at("held").is_null()) {
    if (!j.at("held").is_string()) throw InvalidArgument("held: expected a block name or null");
    try {
      held = parse_block_name(*s.blocks, j.at("held").get<std::string>());
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(std::string("held: ") + e.what());
    }
  }
  try {
    s.initial = WorldState(s.blocks, std::move(towers), held);
  } catch (const InvalidState& e) {
    throw InvalidArgument(std::string("towers: ") + e.what());
  }

  const auto& aj = field("actions");
  if (!aj.is_array()) throw InvalidArgument("actions: expected an array");
  for (std::size_t i = 0; i < aj.size(); ++i) {
    if (!aj[i].is_string()) throw InvalidArgument("actions[" + std::to_string(i) + "]: expected a string");
    try {
      s.actions.push_back(parse_action(*s.blocks, aj[i].get<std::string>()));
    } catch (const InvalidArgument& e) {
      throw InvalidArgument("actions[" + std::to_string(i) + "]: " + e.what());
    }
  }
  const auto& jj = field("judgments");
  if (!jj.is_array()) throw InvalidArgument("judgments: expected an array of step indices");
  for (std::size_t i = 0; i < jj.size(); ++i) {
    if (!jj[i].is_number_unsigned())
      throw InvalidArgument("judgments[" + std::to_string(i) + "]: expected a non-negative integer");
    s.judgments.push_back(jj[i].get<std::size_t>());
  }
  s.true_word = str("true_word");
  validate(s);
  return s;
}

/// Parses scenario text. Syntax errors carry the line; schema errors name
/// the field and, when it can be located, its line.
inline Scenario parse_scenario(const std::string& text, const std::string& source = "<scenario>") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < std::min(e.byte, text.size()); ++i) line += text[i] == '\n';
    throw ParseError(source, line, e.what());
  }
  try {
    return scenario_from_json(j);
  } catch (const InvalidArgument& e) {
    // Best-effort line: first line mentioning the top-level field name.
    std::string what = e.what();
    std::string key = what.substr(0, what.find_first_of("[:"));
    std::size_t line = 0, n = 1;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l); ++n)
      if (l.find("\"" + key + "\"") != std::string::npos) {
        line = n;
        break;
      }
    throw ParseError(source, line, what);
  }
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), path.string());
}

/// Writes to a sibling temporary file, then renames over `path`.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw Error("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void save_scenario(const Scenario& s, const std::filesystem::path& path) {
  write_file_atomic(path, to_canonical_text(s));
}

/// All *.json scenarios in `dir`, sorted by file name.
inline std::vector<Scenario> load_scenario_dir(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<Scenario> out;
  for (const auto& f : files) out.push_back(load_scenario(f));
  return out;
}

}  // namespace blockwords
