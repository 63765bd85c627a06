#pragma once

// Listening-test service: sessions over loaded plans, blinded trial payloads,
// durable append-only response logs, and the HTTP surface for the browser
// client.

#include <fcntl.h>
#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "vqdr/error.hpp"
#include "vqdr/testbench.hpp"

namespace vqdr {

struct ServiceConfig {
  std::filesystem::path plan_dir;
  std::filesystem::path corpus_root;  // base for relative stimulus paths; empty: the plan directory
  std::filesystem::path state_dir;    // logs; empty: the plan directory
  std::optional<std::filesystem::path> static_dir;
  std::string token_salt;  // empty: random per process
};

struct Session {
  std::string session_id;
  std::string plan_id;
  std::string listener_id;
  std::size_t cursor = 0;
  std::string created_at;
};

inline nlohmann::json to_json(const Session& s, std::size_t total) {
  return {{"session_id", s.session_id}, {"plan_id", s.plan_id},       {"listener_id", s.listener_id},
          {"cursor", s.cursor},         {"created_at", s.created_at}, {"total", total}};
}

namespace detail {

/// Appends one line and fsyncs before returning.
inline void durable_append(const std::filesystem::path& path, const std::string& line) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  require(fd >= 0, ErrorCode::IoFailure, "cannot open " + path.string());
  const std::string data = line + "\n";
  std::size_t written = 0;
  while (written < data.size()) {
    const ssize_t n = ::write(fd, data.data() + written, data.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      fail(ErrorCode::IoFailure, "write failed on " + path.string());
    }
    written += static_cast<std::size_t>(n);
  }
  const bool synced = ::fsync(fd) == 0;
  ::close(fd);
  require(synced, ErrorCode::IoFailure, "fsync failed on " + path.string());
}

/// JSON lines of a log; an unterminated, unparsable final line (torn write)
/// is dropped.
inline std::vector<nlohmann::json> read_log(const std::filesystem::path& path) {
  std::vector<nlohmann::json> out;
  std::ifstream in(path, std::ios::binary);
  if (!in) return out;
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t end = text.find('\n', pos);
    const bool terminated = end != std::string::npos;
    const std::string line = text.substr(pos, terminated ? end - pos : std::string::npos);
    pos = terminated ? end + 1 : text.size();
    if (trim(line).empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error&) {
      require(!terminated, ErrorCode::ParseError, "corrupt record in " + path.string());
    }
  }
  return out;
}

inline std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

inline std::string random_hex(std::size_t bytes) {
  static std::mutex mutex;
  static std::random_device device;
  std::lock_guard lock(mutex);
  std::ostringstream s;
  for (std::size_t i = 0; i < bytes; ++i) s << std::hex << std::setw(2) << std::setfill('0') << (device() & 0xffu);
  return s.str();
}

}  // namespace detail

class ListeningService {
 public:
  explicit ListeningService(ServiceConfig config) : config_(std::move(config)) {
    require(std::filesystem::is_directory(config_.plan_dir), ErrorCode::IoFailure,
            "plan directory " + config_.plan_dir.string() + " does not exist");
    if (config_.state_dir.empty()) config_.state_dir = config_.plan_dir;
    if (config_.corpus_root.empty()) config_.corpus_root = config_.plan_dir;
    if (config_.token_salt.empty()) config_.token_salt = detail::random_hex(16);
    std::filesystem::create_directories(config_.state_dir);

    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(config_.plan_dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".plan") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      auto state = std::make_unique<PlanState>();
      state->plan = load_plan(file);
      const std::string id = state->plan.plan_id;
      require(plans_.count(id) == 0, ErrorCode::DuplicateEntry, "plan id " + id + " defined twice");
      state->log_path = config_.state_dir / (id + ".responses.jsonl");
      for (const auto& j : detail::read_log(state->log_path)) state->responses.push_back(response_from_json(j));
      for (const auto& s : state->plan.stimuli) {
        const std::string token = detail::fnv1a_hex(config_.token_salt + '\x1f' + id + '\x1f' + s.stim_id);
        tokens_[token] = {id, s.stim_id};
        state->token_of[s.stim_id] = token;
      }
      plans_.emplace(id, std::move(state));
    }

    for (const auto& j : detail::read_log(sessions_log())) {
      Session s;
      s.session_id = j.at("session_id").get<std::string>();
      s.plan_id = j.at("plan_id").get<std::string>();
      s.listener_id = j.at("listener_id").get<std::string>();
      s.created_at = j.value("created_at", std::string());
      if (plans_.count(s.plan_id) == 0) continue;  // plan removed since
      sessions_.emplace(s.session_id, s);
    }
    // Cursors follow from the logs: answers arrive strictly in order.
    for (const auto& [id, state] : plans_) {
      for (const auto& r : state->responses) {
        const auto it = sessions_.find(r.session_id);
        if (it != sessions_.end()) it->second.cursor = std::max(it->second.cursor, r.trial_index + 1);
      }
    }
  }

  std::vector<std::string> plan_ids() const {
    std::vector<std::string> ids;
    for (const auto& [id, state] : plans_) ids.push_back(id);
    return ids;
  }

  const TestPlan& plan(const std::string& plan_id) const { return find_plan(plan_id).plan; }

  Session create_session(const std::string& plan_id, const std::string& listener_id) {
    find_plan(plan_id);
    Session s;
    s.plan_id = plan_id;
    s.listener_id = listener_id;
    s.created_at = utc_timestamp();
    std::lock_guard lock(sessions_mutex_);
    do {
      s.session_id = detail::random_hex(16);
    } while (sessions_.count(s.session_id) > 0);
    detail::durable_append(sessions_log(), nlohmann::json{{"session_id", s.session_id},
                                                          {"plan_id", s.plan_id},
                                                          {"listener_id", s.listener_id},
                                                          {"created_at", s.created_at}}
                                               .dump());
    sessions_.emplace(s.session_id, s);
    return s;
  }

  Session session(const std::string& session_id) const {
    const Session& s = find_session(session_id);
    std::lock_guard lock(find_plan(s.plan_id).mutex);
    return s;
  }

  /// Blinded payload: opaque tokens and the question only.
  nlohmann::json get_trial(const std::string& session_id, std::size_t n) const {
    const Session& s = find_session(session_id);
    const PlanState& state = find_plan(s.plan_id);
    std::lock_guard lock(state.mutex);
    const std::size_t total = state.plan.trials.size();
    require(n < total, ErrorCode::PlanComplete, "trial " + std::to_string(n) + " is past the last trial");
    require(n == s.cursor, ErrorCode::OutOfOrder,
            "requested trial " + std::to_string(n) + " but the session is at " + std::to_string(s.cursor));
    const Trial& trial = state.plan.trials[n];
    nlohmann::json payload{{"session_id", session_id},
                           {"trial_index", n},
                           {"n", n},
                           {"total", total},
                           {"slot_a", state.token_of.at(trial.slot_a)},
                           {"slot_b", state.token_of.at(trial.slot_b)},
                           {"question", std::string(to_string(trial.question))},
                           {"question_text", question_text(trial.question)}};
    if (trial.reference_x) payload["reference_x"] = state.token_of.at(*trial.reference_x);
    return payload;
  }

  /// Returns the session after the answer; an identical resubmission of an
  /// already recorded answer is acknowledged without a second log line.
  Session submit_response(const std::string& session_id, std::size_t n, Choice choice, int confidence) {
    Session& s = find_session(session_id);
    PlanState& state = find_plan(s.plan_id);
    std::lock_guard lock(state.mutex);
    require(confidence >= 1 && confidence <= 7, ErrorCode::BadConfidence,
            "confidence " + std::to_string(confidence) + " outside 1..7");
    if (n < s.cursor) {
      for (const auto& r : state.responses) {
        if (r.session_id == session_id && r.trial_index == n) {
          require(r.choice == choice && r.confidence == confidence, ErrorCode::DuplicateResponse,
                  "trial " + std::to_string(n) + " already answered differently");
          return s;
        }
      }
      fail(ErrorCode::OutOfOrder, "trial " + std::to_string(n) + " was never answered");
    }
    require(n < state.plan.trials.size(), ErrorCode::PlanComplete, "trial " + std::to_string(n) + " is past the end");
    require(n == s.cursor, ErrorCode::OutOfOrder,
            "answered trial " + std::to_string(n) + " but the session is at " + std::to_string(s.cursor));
    TrialResponse r{session_id, n, choice, confidence, utc_timestamp()};
    detail::durable_append(state.log_path, to_json(r).dump());
    state.responses.push_back(std::move(r));
    ++s.cursor;
    return s;
  }

  /// Consistent snapshot of a plan's responses.
  std::vector<TrialResponse> responses(const std::string& plan_id) const {
    const PlanState& state = find_plan(plan_id);
    std::lock_guard lock(state.mutex);
    return state.responses;
  }

  std::string results_csv(const std::string& plan_id) const {
    const PlanState& state = find_plan(plan_id);
    const auto snapshot = responses(plan_id);
    std::ostringstream out;
    write_aggregate_csv(aggregate(snapshot, state.plan), out);
    return out.str();
  }

  std::string responses_jsonl(const std::string& plan_id) const {
    std::ostringstream out;
    for (const auto& r : responses(plan_id)) out << to_json(r).dump() << '\n';
    return out.str();
  }

  std::filesystem::path stimulus_path(const std::string& token) const {
    const auto it = tokens_.find(token);
    require(it != tokens_.end(), ErrorCode::UnknownStimulus, "unknown stimulus token");
    const std::filesystem::path p = find_plan(it->second.first).plan.stimulus(it->second.second).path;
    return p.is_absolute() ? p : config_.corpus_root / p;
  }

  const ServiceConfig& config() const { return config_; }

 private:
  struct PlanState {
    TestPlan plan;
    std::filesystem::path log_path;
    std::vector<TrialResponse> responses;
    std::map<std::string, std::string> token_of;  // stim_id -> token
    mutable std::mutex mutex;                     // serializes this plan's log and its sessions' cursors
  };

  std::filesystem::path sessions_log() const { return config_.state_dir / "sessions.jsonl"; }

  PlanState& find_plan(const std::string& plan_id) const {
    const auto it = plans_.find(plan_id);
    require(it != plans_.end(), ErrorCode::UnknownPlan, "no plan '" + plan_id + "'");
    return *it->second;
  }

  Session& find_session(const std::string& session_id) const {
    std::lock_guard lock(sessions_mutex_);
    const auto it = sessions_.find(session_id);
    require(it != sessions_.end(), ErrorCode::UnknownSession, "no session '" + session_id + "'");
    return it->second;
  }

  ServiceConfig config_;
  std::map<std::string, std::unique_ptr<PlanState>> plans_;
  std::map<std::string, std::pair<std::string, std::string>> tokens_;  // token -> (plan_id, stim_id)
  mutable std::map<std::string, Session> sessions_;
  mutable std::mutex sessions_mutex_;
};

// ---------------------------------------------------------------------------
// HTTP

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownPlan:
    case ErrorCode::UnknownSession:
    case ErrorCode::UnknownStimulus:
    case ErrorCode::UnknownTrial: return 404;
    case ErrorCode::OutOfOrder:
    case ErrorCode::DuplicateResponse: return 409;
    case ErrorCode::PlanComplete: return 410;
    case ErrorCode::BadConfidence:
    case ErrorCode::ParseError:
    case ErrorCode::InvalidArgument: return 400;
    default: return 500;
  }
}

namespace detail {

inline void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline nlohmann::json parse_body(const httplib::Request& req) {
  if (trim(req.body).empty()) return nlohmann::json::object();
  try {
    auto j = nlohmann::json::parse(req.body);
    require(j.is_object(), ErrorCode::ParseError, "request body must be a JSON object");
    return j;
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::ParseError, std::string("malformed JSON body: ") + e.what());
  }
}

inline std::size_t parse_index(const std::string& s) {
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(s, &pos);
    if (pos == s.size()) return static_cast<std::size_t>(v);
  } catch (const std::logic_error&) {
  }
  fail(ErrorCode::ParseError, "bad trial index '" + s + "'");
}

template <class Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      send_json(res, http_status(e.code()), {{"error", std::string(to_string(e.code()))}, {"message", e.what()}});
    } catch (const nlohmann::json::exception& e) {
      send_json(res, 400, {{"error", "ParseError"}, {"message", e.what()}});
    }
  };
}

}  // namespace detail

/// Installs the endpoints on `server`. The service must outlive it.
inline void install_routes(httplib::Server& server, ListeningService& service) {
  using detail::guarded;
  using detail::send_json;

  server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}});
  });

  server.Get("/plans", guarded([&service](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"plans", service.plan_ids()}});
  }));

  server.Post(R"(/plans/([^/]+)/sessions)", guarded([&service](const httplib::Request& req, httplib::Response& res) {
    const auto body = detail::parse_body(req);
    const std::string listener = body.value("listener_id", std::string());
    const Session s = service.create_session(req.matches[1], listener);
    send_json(res, 201, to_json(s, service.plan(s.plan_id).trials.size()));
  }));

  server.Get(R"(/sessions/([^/]+))", guarded([&service](const httplib::Request& req, httplib::Response& res) {
    const Session s = service.session(req.matches[1]);
    send_json(res, 200, to_json(s, service.plan(s.plan_id).trials.size()));
  }));

  server.Get(R"(/sessions/([^/]+)/trials/([^/]+))",
             guarded([&service](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, service.get_trial(req.matches[1], detail::parse_index(req.matches[2])));
             }));

  server.Post(R"(/sessions/([^/]+)/trials/([^/]+)/response)",
              guarded([&service](const httplib::Request& req, httplib::Response& res) {
                const auto body = detail::parse_body(req);
                require(body.contains("choice") && body.contains("confidence"), ErrorCode::ParseError,
                        "response needs choice and confidence");
                const Choice choice = parse_choice(body.at("choice").get<std::string>());
                require(body.at("confidence").is_number_integer(), ErrorCode::BadConfidence,
                        "confidence must be an integer");
                const Session s = service.submit_response(req.matches[1], detail::parse_index(req.matches[2]), choice,
                                                          body.at("confidence").get<int>());
                const std::size_t total = service.plan(s.plan_id).trials.size();
                send_json(res, 200,
                          {{"ok", true}, {"session_id", s.session_id}, {"cursor", s.cursor}, {"total", total},
                           {"complete", s.cursor >= total}});
              }));

  server.Get(R"(/stimuli/([^/]+))", guarded([&service](const httplib::Request& req, httplib::Response& res) {
    const auto path = service.stimulus_path(req.matches[1]);
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::UnknownStimulus, "stimulus audio is missing");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    res.status = 200;
    res.set_content(std::move(bytes), "audio/wav");
  }));

  server.Get(R"(/plans/([^/]+)/results\.csv)", guarded([&service](const httplib::Request& req, httplib::Response& res) {
    res.status = 200;
    res.set_content(service.results_csv(req.matches[1]), "text/csv");
  }));

  server.Get(R"(/plans/([^/]+)/responses\.jsonl)",
             guarded([&service](const httplib::Request& req, httplib::Response& res) {
               res.status = 200;
               res.set_content(service.responses_jsonl(req.matches[1]), "application/x-ndjson");
             }));

  if (service.config().static_dir) {
    require(server.set_mount_point("/", service.config().static_dir->string()), ErrorCode::IoFailure,
            "cannot serve static files from " + service.config().static_dir->string());
  }
}

}  // namespace vqdr
