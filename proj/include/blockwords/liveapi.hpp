#pragma once

// Interactive sessions: a block layout that a client changes one action at
// a time while inference runs after every action. Sessions are replayable
// from their seed, which is how undo works. Message bodies are JSON objects
// carrying a "v" schema version.

#include <chrono>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <vector>

#include "blockwords/error.hpp"
#include "blockwords/harness.hpp"
#include "blockwords/inference.hpp"
#include "blockwords/scenario.hpp"
#include "json.hpp"

namespace blockwords {

inline constexpr int kProtocolVersion = 1;

/// Failure with a protocol status code and a machine-readable code.
class ApiError : public Error {
 public:
  ApiError(int status, std::string code, const std::string& message)
      : Error(message), status_(status), code_(std::move(code)) {}
  int status() const noexcept { return status_; }
  const std::string& code() const noexcept { return code_; }

 private:
  int status_;
  std::string code_;
};

inline nlohmann::ordered_json error_body(const ApiError& e) {
  return {{"v", kProtocolVersion}, {"error", {{"code", e.code()}, {"message", e.what()}}}};
}

struct SessionConfig {
  std::string letters;
  std::optional<Scenario> layout;  // initial towers when given; blocks must match letters
  RunParams params;
  std::uint64_t seed = 0;
  std::size_t top_k = 5;
};

/// Parses a create-session request body.
inline SessionConfig session_config_from_json(const nlohmann::json& j, const RunParams& defaults) {
  if (!j.is_object()) throw ApiError(400, "invalid_request", "body must be a JSON object");
  SessionConfig c;
  try {
    if (j.contains("blocks")) {
      const auto& b = j.at("blocks");
      if (b.is_string()) {
        c.letters = b.get<std::string>();
      } else {
        for (const auto& x : b) c.letters += x.get<std::string>();
      }
    }
    c.params = run_params_from_json(j.value("params", nlohmann::json::object()), defaults);
    if (j.contains("method")) c.params = run_params_from_json({{"method", j.at("method")}}, c.params);
    c.seed = j.contains("seed") ? j.at("seed").get<std::uint64_t>() : std::random_device{}();
    c.top_k = j.value("top_k", std::size_t{5});
    if (j.contains("towers")) {
      Scenario s;
      s.id = "session";
      s.blocks = std::make_shared<const BlockSet>(c.letters);
      std::vector<Tower> towers;
      for (const auto& t : j.at("towers")) {
        Tower tower;
        for (const auto& name : t) tower.push_back(parse_block_name(*s.blocks, name.get<std::string>()));
        towers.push_back(std::move(tower));
      }
      std::optional<BlockId> held;
      if (j.contains("held") && !j.at("held").is_null())
        held = parse_block_name(*s.blocks, j.at("held").get<std::string>());
      s.initial = WorldState(s.blocks, std::move(towers), held);
      c.layout = std::move(s);
    }
  } catch (const ApiError&) {
    throw;
  } catch (const std::exception& e) {
    throw ApiError(400, "invalid_request", e.what());
  }
  if (c.letters.empty() || c.letters.size() > 26)
    throw ApiError(400, "invalid_request", "blocks: expected 1 to 26 letters");
  for (char ch : c.letters)
    if (!is_letter(ch)) throw ApiError(400, "invalid_request", std::string("blocks: invalid letter '") + ch + "'");
  try {
    validate(c.params);
  } catch (const InvalidArgument& e) {
    throw ApiError(400, "invalid_request", e.what());
  }
  if (c.top_k < 1) throw ApiError(400, "invalid_request", "top_k must be >= 1");
  return c;
}

/// One live inference session. Public methods lock; a session applies one
/// action at a time.
class Session {
 public:
  Session(std::string id, std::shared_ptr<const Engine> engine, SessionConfig config)
      : id_(std::move(id)), engine_(std::move(engine)), config_(std::move(config)) {
    blocks_ = config_.layout ? config_.layout->blocks : std::make_shared<const BlockSet>(config_.letters);
    initial_ = config_.layout ? config_.layout->initial : WorldState::all_on_table(blocks_);
    Scenario s;
    s.blocks = blocks_;
    model_ = engine_->model(s, config_.params);
    reset();
  }

  const std::string& id() const noexcept { return id_; }

  /// Applies `a` and runs one inference step. Throws ApiError 409 when the
  /// action is illegal; the session is unchanged in that case.
  nlohmann::ordered_json post_action(const Action& a) {
    std::unique_lock lock(mu_);
    try {
      (void)apply(state_, a);
    } catch (const IllegalAction& e) {
      throw ApiError(409, "illegal_action", e.what());
    }
    const auto start = std::chrono::steady_clock::now();
    advance(a);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    auto body = view_locked();
    body["latency_ms"] = ms;
    publish_locked(body);
    return body;
  }

  nlohmann::ordered_json post_action(const std::string& text) {
    Action a;
    try {
      a = parse_action(*blocks_, text);
    } catch (const InvalidArgument& e) {
      throw ApiError(400, "invalid_action", e.what());
    }
    return post_action(a);
  }

  /// Drops the last action and replays the rest from step 0 with the same
  /// seed, which reproduces the earlier posterior exactly.
  nlohmann::ordered_json undo() {
    std::unique_lock lock(mu_);
    if (history_.empty()) throw ApiError(409, "empty_history", "nothing to undo");
    auto replay = history_;
    replay.pop_back();
    reset();
    for (const Action& a : replay) advance(a);
    auto body = view_locked();
    publish_locked(body);
    return body;
  }

  nlohmann::ordered_json view() const {
    std::unique_lock lock(mu_);
    return view_locked();
  }

  PosteriorSnapshot snapshot() const {
    std::unique_lock lock(mu_);
    return snapshot_locked();
  }

  std::vector<Action> history() const {
    std::unique_lock lock(mu_);
    return history_;
  }

  WorldState state() const {
    std::unique_lock lock(mu_);
    return state_;
  }

  /// Version counter of the last published update.
  std::uint64_t version() const {
    std::unique_lock lock(mu_);
    return version_;
  }

  /// Waits until an update newer than `seen` exists or `timeout` passes.
  /// Returns the update and its version, or nullopt on timeout.
  std::optional<std::pair<std::uint64_t, std::string>> wait_update(std::uint64_t seen,
                                                                   std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    if (!cv_.wait_for(lock, timeout, [&] { return version_ > seen || closed_; })) return std::nullopt;
    if (closed_ && version_ <= seen) return std::nullopt;
    return std::make_pair(version_, last_update_);
  }

  void close() {
    std::unique_lock lock(mu_);
    closed_ = true;
    cv_.notify_all();
  }

  bool closed() const {
    std::unique_lock lock(mu_);
    return closed_;
  }

 private:
  void reset() {
    state_ = initial_;
    history_.clear();
    exact_.reset();
    sips_.reset();
    switch (config_.params.method) {
      case Method::Exact: exact_.emplace(model_, initial_); break;
      case Method::Sips:
        sips_.emplace(model_, SipsConfig{config_.params.n_particles, config_.params.weighting}, config_.seed, initial_);
        break;
      case Method::ProposalOnly: break;
    }
  }

  void advance(const Action& a) {
    if (exact_) exact_->step(a);
    if (sips_) sips_->step(a);
    state_ = apply(state_, a);
    history_.push_back(a);
  }

  PosteriorSnapshot snapshot_locked() const {
    if (exact_) return exact_->snapshot();
    if (sips_) return sips_->snapshot();
    ObservedTrace trace(initial_, history_);
    return proposal_only_snapshot(model_, trace, history_.size(), config_.params.n_particles, config_.seed,
                                  config_.params.proposal_only_weighting);
  }

  nlohmann::ordered_json state_json() const {
    nlohmann::ordered_json towers = nlohmann::ordered_json::array();
    for (const Tower& t : state_.towers()) {
      nlohmann::ordered_json tower = nlohmann::ordered_json::array();
      for (BlockId id : t) tower.push_back(block_name(*blocks_, id));
      towers.push_back(tower);
    }
    return {{"towers", towers},
            {"held", state_.held() ? nlohmann::ordered_json(block_name(*blocks_, *state_.held()))
                                   : nlohmann::ordered_json(nullptr)}};
  }

  nlohmann::ordered_json view_locked() const {
    const PosteriorSnapshot snap = snapshot_locked();
    nlohmann::ordered_json top = nlohmann::ordered_json::array();
    for (const auto& [w, p] : snap.top(config_.top_k)) top.push_back({{"word", w}, {"prob", p}});
    nlohmann::ordered_json dist = nlohmann::ordered_json::object();
    for (const auto& [w, p] : snap.probs) dist[w] = p;
    nlohmann::ordered_json history = nlohmann::ordered_json::array();
    for (const Action& a : history_) history.push_back(describe(a, *blocks_));
    nlohmann::ordered_json legal = nlohmann::ordered_json::array();
    for (const Action& a : legal_actions(state_)) legal.push_back(describe(a, *blocks_));
    nlohmann::ordered_json blocks = nlohmann::ordered_json::array();
    for (char c : blocks_->letters()) blocks.push_back(std::string(1, c));
    return {{"v", kProtocolVersion},
            {"session_id", id_},
            {"method", to_string(config_.params.method)},
            {"params", to_json(config_.params)},
            {"seed", config_.seed},
            {"blocks", blocks},
            {"step", history_.size()},
            {"state", state_json()},
            {"history", history},
            {"legal_actions", legal},
            {"posterior",
             {{"top", top},
              {"distribution", dist},
              {"degenerate", snap.degenerate},
              {"unique_hypotheses", snap.unique_hypotheses},
              {"evaluations", snap.evaluations}}}};
  }

  void publish_locked(const nlohmann::ordered_json& body) {
    ++version_;
    last_update_ = body.dump();
    cv_.notify_all();
  }

  std::string id_;
  std::shared_ptr<const Engine> engine_;
  SessionConfig config_;
  std::shared_ptr<const BlockSet> blocks_;
  WorldState initial_;
  InferenceModel model_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  WorldState state_;
  std::vector<Action> history_;
  std::optional<ExactTracker> exact_;
  std::optional<SipsFilter> sips_;
  std::uint64_t version_ = 0;
  std::string last_update_;
  bool closed_ = false;
};

/// Owns the sessions; lookups take a shared lock, creation an exclusive one.
class SessionManager {
 public:
  explicit SessionManager(std::shared_ptr<const Engine> engine, RunParams defaults = {})
      : engine_(std::move(engine)), defaults_(defaults) {}

  const RunParams& defaults() const noexcept { return defaults_; }

  std::shared_ptr<Session> create(SessionConfig config) {
    auto id = new_id();
    std::shared_ptr<Session> s;
    try {
      s = std::make_shared<Session>(id, engine_, std::move(config));
    } catch (const ApiError&) {
      throw;
    } catch (const Error& e) {
      throw ApiError(400, "invalid_request", e.what());
    }
    std::unique_lock lock(mu_);
    sessions_.emplace(id, s);
    return s;
  }

  std::shared_ptr<Session> create(const nlohmann::json& body) { return create(session_config_from_json(body, defaults_)); }

  std::shared_ptr<Session> get(const std::string& id) const {
    std::shared_lock lock(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw ApiError(404, "unknown_session", "no session \"" + id + "\"");
    return it->second;
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return sessions_.size();
  }

  void close_all() {
    std::shared_lock lock(mu_);
    for (auto& [id, s] : sessions_) s->close();
  }

 private:
  /// 128 random bits as 32 hex digits.
  std::string new_id() {
    std::unique_lock lock(rng_mu_);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string id;
    for (int i = 0; i < 4; ++i) {
      std::uint32_t x = rd_();
      for (int k = 0; k < 8; ++k, x >>= 4) id += kHex[x & 0xF];
    }
    return id;
  }

  std::shared_ptr<const Engine> engine_;
  RunParams defaults_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mutex rng_mu_;
  std::random_device rd_;
};

}  // namespace blockwords
