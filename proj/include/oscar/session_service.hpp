#pragma once

// Live tracking sessions: frames in, progress and Q&A out.
//
// Each session owns a recipe, an online tracker, its prediction log and
// Q&A history. Mutations of one session are serialized by that session's
// mutex; sessions never wait on each other. Every change is published to
// the session's subscribers and, when a log directory is configured,
// appended to <log-dir>/<id>.jsonl so that replay() can rebuild state after
// a restart.

#include <chrono>
#include <condition_variable>
#include <ctime>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "oscar/alignment.hpp"
#include "oscar/causal_tracker.hpp"
#include "oscar/embedding.hpp"
#include "oscar/errors.hpp"
#include "oscar/llm_client.hpp"
#include "oscar/prompt_templates.hpp"
#include "oscar/recipe.hpp"
#include "oscar/recipe_processing.hpp"
#include "oscar/template.hpp"

namespace oscar {

inline constexpr std::size_t kDefaultQaLogWindow = 50;

struct SessionConfig {
  TrackerConfig tracker;
  double fusion_weight = kDefaultFusionWeight;
  std::size_t qa_log_window = kDefaultQaLogWindow;

  void check() const {
    tracker.check();
    if (fusion_weight < 0.0 || fusion_weight > 1.0) throw InvalidWeight("fusion weight must lie in [0, 1]");
  }
};

inline nlohmann::json to_json(const SessionConfig& c) {
  return {{"tracker", to_json(c.tracker)}, {"fusion_weight", c.fusion_weight}, {"qa_log_window", c.qa_log_window}};
}

inline SessionConfig session_config_from_json(const nlohmann::json& j) {
  SessionConfig c;
  try {
    if (j.contains("tracker")) c.tracker = tracker_config_from_json(j.at("tracker"));
    c.fusion_weight = j.value("fusion_weight", c.fusion_weight);
    c.qa_log_window = j.value("qa_log_window", c.qa_log_window);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad session config: ") + e.what());
  }
  c.check();
  return c;
}

struct QAExchange {
  std::string question;
  std::string answer;
  std::size_t log_cursor = 0;  // prompt saw log entries [0, log_cursor)

  friend bool operator==(const QAExchange&, const QAExchange&) = default;
};

inline nlohmann::json to_json(const QAExchange& q) {
  return {{"question", q.question}, {"answer", q.answer}, {"log_cursor", q.log_cursor}};
}

inline QAExchange qa_from_json(const nlohmann::json& j) {
  try {
    return {j.at("question").get<std::string>(), j.at("answer").get<std::string>(),
            j.at("log_cursor").get<std::size_t>()};
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad Q&A exchange: ") + e.what());
  }
}

/// Read-only copy of a session.
struct SessionSnapshot {
  std::string id;
  std::string created_at;
  Recipe recipe;
  SessionConfig config;
  ProgressState progress;
  std::vector<PredictionLogEntry> log;
  std::vector<QAExchange> qa;
  std::optional<FrameRef> last_frame;
};

// ---------------------------------------------------------------------------
// Q&A prompt

namespace detail {

inline std::string join_steps(const std::set<int>& steps) {
  if (steps.empty()) return "none";
  std::string out;
  for (int i : steps) out += (out.empty() ? "" : ", ") + std::to_string(i);
  return out;
}

inline std::string fixed2(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v;
  return os.str();
}

inline std::string step_tag(const ProgressState& p, int i) {
  if (i == p.current) return "current";
  if (p.completed.count(i)) return "completed";
  if (p.missing.count(i)) return "missing";
  return "remaining";
}

}  // namespace detail

/// Deterministic prompt from session state. `log_cursor` limits the log to
/// its first entries (defaults to all of it); progress is taken at the cursor.
inline std::string build_qa_prompt(const SessionSnapshot& s, std::string_view question, bool include_last_frame,
                                   std::optional<std::size_t> log_cursor = std::nullopt) {
  const std::size_t cursor = std::min(log_cursor.value_or(s.log.size()), s.log.size());
  const ProgressState progress = cursor == 0 ? ProgressState::fresh(static_cast<int>(s.recipe.size()))
                                             : s.log[cursor - 1].state_after;

  std::ostringstream recipe;
  if (!s.recipe.title.empty()) recipe << "Title: " << s.recipe.title << "\n";
  if (!s.recipe.ingredients.empty()) {
    recipe << "Ingredients:";
    for (std::size_t i = 0; i < s.recipe.ingredients.size(); ++i)
      recipe << (i ? ", " : " ") << s.recipe.ingredients[i];
    recipe << "\n";
  }
  for (const auto& step : s.recipe.steps) {
    recipe << step.index << ". [" << detail::step_tag(progress, step.index) << "] " << step.text << "\n";
    if (!step.statuses.empty()) {
      recipe << "   Object statuses:";
      for (std::size_t j = 0; j < step.statuses.size(); ++j)
        recipe << (j ? "; " : " ") << step.statuses[j].object << " " << step.statuses[j].state;
      recipe << "\n";
    }
  }

  std::ostringstream prog;
  if (progress.current == 0)
    prog << "Current step: none, tracking has not started yet\n";
  else
    prog << "Current step: " << progress.current << ". " << s.recipe.step(progress.current).text << "\n";
  prog << "Completed steps: " << detail::join_steps(progress.completed) << "\n"
       << "Missing steps: " << detail::join_steps(progress.missing) << "\n"
       << "Remaining steps: " << detail::join_steps(progress.remaining);

  std::ostringstream log;
  if (cursor == 0) {
    log << "Tracking has not started yet; no frames have been processed.";
  } else {
    const std::size_t window = std::max<std::size_t>(s.config.qa_log_window, 1);
    const std::size_t first = cursor > window ? cursor - window : 0;
    for (std::size_t i = first; i < cursor; ++i) {
      const auto& e = s.log[i];
      log << (i > first ? "\n" : "") << "- t=" << detail::fixed2(e.t_s) << "s predicted step " << e.predicted
          << ", current step " << e.state_after.current;
    }
  }

  std::string frame;
  if (include_last_frame && s.last_frame) {
    const auto& f = *s.last_frame;
    frame = "\n## Current frame\nt=" + detail::fixed2(f.t_s) + "s: " +
            (f.payload.empty() ? f.path
                               : "inline " + (f.format.empty() ? std::string("image") : f.format) + " image, " +
                                     std::to_string(f.payload.size()) + " bytes") +
            "\n";
  }

  return fill_template(prompts::kQa, {{"recipe", recipe.str()},
                                      {"progress", prog.str()},
                                      {"log", log.str()},
                                      {"frame", frame},
                                      {"question", std::string(question)}});
}

// ---------------------------------------------------------------------------
// Events

struct SessionEvent {
  std::uint64_t seq = 0;  // per subscription, from 0
  std::string type;       // snapshot | progress | qa | closed
  nlohmann::json data;
};

inline std::string to_sse(const SessionEvent& e) {
  return "id: " + std::to_string(e.seq) + "\nevent: " + e.type + "\ndata: " + e.data.dump() + "\n\n";
}

class EventSubscription {
 public:
  /// Next event, or nullopt after `timeout` or once the stream has ended.
  std::optional<SessionEvent> next(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || closed_; });
    if (queue_.empty()) return std::nullopt;
    SessionEvent e = std::move(queue_.front());
    queue_.pop_front();
    return e;
  }

  /// True once the session closed and every queued event was consumed.
  bool ended() const {
    std::lock_guard lock(mu_);
    return closed_ && queue_.empty();
  }

  void cancel() { finish(); }

 private:
  friend class SessionManager;

  void push(std::string type, nlohmann::json data) {
    {
      std::lock_guard lock(mu_);
      if (closed_) return;
      queue_.push_back({next_seq_++, std::move(type), std::move(data)});
    }
    cv_.notify_all();
  }

  bool finished() const {
    std::lock_guard lock(mu_);
    return closed_;
  }

  void finish() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<SessionEvent> queue_;
  std::uint64_t next_seq_ = 0;
  bool closed_ = false;
};

// ---------------------------------------------------------------------------
// Manager

class SessionManager {
 public:
  SessionManager(std::shared_ptr<EmbeddingBackend> backend, std::shared_ptr<LlmClient> llm,
                 std::optional<std::filesystem::path> log_dir = std::nullopt)
      : backend_(std::move(backend)), llm_(std::move(llm)), log_dir_(std::move(log_dir)) {
    if (log_dir_) std::filesystem::create_directories(*log_dir_);
  }

  ~SessionManager() { shutdown(); }

  /// Steps without statuses get them from the rule engine.
  std::string create_session(Recipe recipe, SessionConfig cfg = {}) {
    validate(recipe);
    cfg.check();
    for (auto& step : recipe.steps)
      if (step.statuses.empty()) step.statuses = rule_based_statuses(step.text, recipe.ingredients, step.index);
    auto s = std::make_shared<Session>(new_id(), now_iso8601(), std::move(recipe), cfg);
    {
      std::lock_guard lock(s->mu);
      persist(*s, {{"type", "create"}, {"id", s->id}, {"created_at", s->created_at},
                   {"recipe", to_json(s->recipe)}, {"config", to_json(s->config)}});
    }
    std::unique_lock lock(map_mu_);
    sessions_.emplace(s->id, s);
    return s->id;
  }

  PredictionLogEntry ingest_frame(const std::string& id, FrameRef frame, double t_s) {
    auto s = find(id);
    std::lock_guard lock(s->mu);
    check_open(*s);
    if (!s->log.empty() && t_s < s->log.back().t_s)
      throw NonMonotoneTimestamp("t_s " + std::to_string(t_s) + " is earlier than the last ingested " +
                                 std::to_string(s->log.back().t_s));
    if (!s->banks) {
      s->banks = {embed_prompts(*backend_, prompts_for_channel(s->recipe, Channel::kBaseline), Channel::kBaseline),
                  embed_prompts(*backend_, prompts_for_channel(s->recipe, Channel::kStatus), Channel::kStatus)};
    }
    frame.t_s = t_s;
    const auto vec = embed_images(*backend_, {frame});
    const auto base = score_embedded(vec, s->banks->first);
    const auto status = score_embedded(vec, s->banks->second);
    const auto fused = fuse_scores(base.row(0), status.row(0), s->config.fusion_weight);
    PredictionLogEntry entry = s->tracker.observe(fused.scores, t_s);
    s->log.push_back(entry);
    s->last_frame = std::move(frame);

    nlohmann::json rec{{"type", "entry"}, {"entry", to_json(entry)}};
    if (s->last_frame->payload.empty()) rec["frame_path"] = s->last_frame->path;
    persist(*s, rec);
    publish(*s, "progress", {{"index", s->log.size() - 1}, {"entry", to_json(entry)}});
    return entry;
  }

  ProgressState get_progress(const std::string& id) const {
    auto s = find(id);
    std::lock_guard lock(s->mu);
    return progress_snapshot(s->tracker.progress());
  }

  SessionSnapshot snapshot(const std::string& id) const {
    auto s = find(id);
    std::lock_guard lock(s->mu);
    return snapshot_locked(*s);
  }

  std::string qa_prompt(const std::string& id, std::string_view question, bool include_last_frame = false) const {
    return build_qa_prompt(snapshot(id), question, include_last_frame);
  }

  /// The LLM call runs outside the session lock so ingest keeps flowing.
  QAExchange ask_question(const std::string& id, const std::string& question, bool include_last_frame = false) {
    if (!llm_) throw BackendError("no LLM client configured");
    auto s = find(id);
    std::string prompt;
    std::size_t cursor = 0;
    {
      std::lock_guard lock(s->mu);
      check_open(*s);
      cursor = s->log.size();
      prompt = build_qa_prompt(snapshot_locked(*s), question, include_last_frame, cursor);
    }
    std::string answer = llm_->chat({{"user", prompt}});
    std::lock_guard lock(s->mu);
    check_open(*s);
    QAExchange q{question, std::move(answer), cursor};
    s->qa.push_back(q);
    persist(*s, {{"type", "qa"}, {"exchange", to_json(q)}});
    publish(*s, "qa", {{"index", s->qa.size() - 1}, {"exchange", to_json(q)}});
    return q;
  }

  /// New subscription whose first event is a snapshot of the session.
  std::shared_ptr<EventSubscription> subscribe(const std::string& id) {
    auto s = find(id);
    std::lock_guard lock(s->mu);
    check_open(*s);
    auto sub = std::make_shared<EventSubscription>();
    sub->push("snapshot", snapshot_event(*s));
    s->subscribers.push_back(sub);
    return sub;
  }

  /// Ends the session: subscribers get a final "closed" event.
  void close_session(const std::string& id) {
    std::shared_ptr<Session> s;
    {
      std::unique_lock lock(map_mu_);
      auto it = sessions_.find(id);
      if (it == sessions_.end()) throw UnknownSession("no session '" + id + "'");
      s = it->second;
      sessions_.erase(it);
    }
    std::lock_guard lock(s->mu);
    s->closed = true;
    persist(*s, {{"type", "close"}});
    publish(*s, "closed", {{"session_id", s->id}});
    for (auto& sub : s->subscribers) sub->finish();
    s->subscribers.clear();
  }

  std::vector<std::string> session_ids() const {
    std::shared_lock lock(map_mu_);
    std::vector<std::string> ids;
    for (const auto& [id, s] : sessions_) ids.push_back(id);
    return ids;
  }

  /// Ends every open event stream without closing sessions (server stop).
  void shutdown() {
    std::shared_lock lock(map_mu_);
    for (const auto& [id, s] : sessions_) {
      std::lock_guard slock(s->mu);
      for (auto& sub : s->subscribers) sub->finish();
      s->subscribers.clear();
    }
  }

  /// Rebuilds open sessions from the log directory by re-running the
  /// tracker over the logged fused scores. Returns the number restored.
  std::size_t replay() {
    if (!log_dir_) return 0;
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(*log_dir_))
      if (e.path().extension() == ".jsonl") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::size_t restored = 0;
    for (const auto& f : files) {
      auto s = replay_file(f);
      if (!s) continue;
      std::unique_lock lock(map_mu_);
      if (sessions_.emplace(s->id, s).second) ++restored;
    }
    return restored;
  }

  const std::optional<std::filesystem::path>& log_dir() const { return log_dir_; }

 private:
  struct Session {
    Session(std::string id_, std::string created, Recipe r, SessionConfig c)
        : id(std::move(id_)), created_at(std::move(created)), recipe(std::move(r)), config(c),
          tracker(static_cast<int>(recipe.size()), c.tracker) {}

    const std::string id;
    const std::string created_at;
    const Recipe recipe;
    const SessionConfig config;
    mutable std::mutex mu;
    OnlineTracker tracker;
    std::vector<PredictionLogEntry> log;
    std::vector<QAExchange> qa;
    std::optional<FrameRef> last_frame;
    std::optional<std::pair<PromptBank, PromptBank>> banks;  // baseline, status
    std::vector<std::shared_ptr<EventSubscription>> subscribers;
    bool closed = false;
  };

  std::shared_ptr<Session> find(const std::string& id) const {
    std::shared_lock lock(map_mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw UnknownSession("no session '" + id + "'");
    return it->second;
  }

  static void check_open(const Session& s) {
    if (s.closed) throw UnknownSession("session '" + s.id + "' is closed");
  }

  static SessionSnapshot snapshot_locked(const Session& s) {
    return {s.id, s.created_at, s.recipe, s.config, s.tracker.progress(), s.log, s.qa, s.last_frame};
  }

  static nlohmann::json snapshot_event(const Session& s) {
    nlohmann::json qa = nlohmann::json::array();
    for (const auto& q : s.qa) qa.push_back(to_json(q));
    return {{"session_id", s.id},          {"recipe", to_json(s.recipe)}, {"progress", to_json(s.tracker.progress())},
            {"log_length", s.log.size()}, {"qa", qa}};
  }

  static void publish(Session& s, const std::string& type, const nlohmann::json& data) {
    std::erase_if(s.subscribers, [](const auto& sub) { return sub->finished(); });
    for (auto& sub : s.subscribers) sub->push(type, data);
  }

  void persist(const Session& s, const nlohmann::json& record) const {
    if (!log_dir_) return;
    std::ofstream out(*log_dir_ / (s.id + ".jsonl"), std::ios::app);
    out << record.dump() << "\n";
    out.flush();
    if (!out) throw BackendError("cannot append to session log in " + log_dir_->string());
  }

  std::shared_ptr<Session> replay_file(const std::filesystem::path& f) {
    std::ifstream in(f);
    std::shared_ptr<Session> s;
    std::size_t line_no = 0;
    try {
      for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        const auto type = j.at("type").get<std::string>();
        if (type == "create") {
          s = std::make_shared<Session>(j.at("id").get<std::string>(), j.at("created_at").get<std::string>(),
                                        recipe_from_json(j.at("recipe")), session_config_from_json(j.at("config")));
        } else if (!s) {
          throw SchemaError("record before create");
        } else if (type == "entry") {
          const auto logged = log_entry_from_json(j.at("entry"));
          const auto entry = s->tracker.observe(logged.fused, logged.t_s);
          if (entry != logged) throw SchemaError("replayed tracker state differs from the logged entry");
          s->log.push_back(entry);
          if (j.contains("frame_path")) s->last_frame = FrameRef{s->id, entry.t_s, j.at("frame_path").get<std::string>(), {}, {}, {}};
        } else if (type == "qa") {
          s->qa.push_back(qa_from_json(j.at("exchange")));
        } else if (type == "close") {
          return nullptr;
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(f.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw SchemaError(f.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    return s;
  }

  static std::string new_id() {
    static std::mutex mu;
    static std::mt19937_64 gen{std::random_device{}()};
    std::lock_guard lock(mu);
    std::ostringstream os;
    os << std::hex << std::setfill('0') << std::setw(16) << gen() << std::setw(16) << gen();
    return os.str();
  }

  static std::string now_iso8601() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
  }

  std::shared_ptr<EmbeddingBackend> backend_;
  std::shared_ptr<LlmClient> llm_;
  std::optional<std::filesystem::path> log_dir_;
  mutable std::shared_mutex map_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

}  // namespace oscar
