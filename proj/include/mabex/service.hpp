#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mabex/v2x.hpp"

namespace mabex::service {

struct ServiceConfig {
  std::string listen = "127.0.0.1:8080";
  std::filesystem::path scene_dir;
  std::chrono::seconds session_ttl{30 * 60};

  // MABEX_LISTEN, MABEX_SCENE_DIR, MABEX_SESSION_TTL (seconds).
  static ServiceConfig from_env();
};

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

wire::Json to_json(const Answer& a);
wire::Json to_json(const StepResult& r);

// One entry of a session's push feed: history entries and loop notices in
// the order they happened. `id` is the position in the feed.
struct FeedItem {
  std::uint64_t id = 0;
  std::string event;  // history | need | unexplained | unmapped_query | reload
  wire::Json data;
};

std::string sse_frame(const FeedItem& item);

// Transport-independent request handling. Paths may carry a query string.
//   POST   /sessions                    {"scene": name, "recipient"?, "strip_annotations"?}
//   DELETE /sessions/{id}
//   POST   /sessions/{id}/events        {"event": "a -> b.m()"}
//   POST   /sessions/{id}/step          {"run"?: bool}
//   POST   /sessions/{id}/query         {"kind": why|whycond|when|whynot|ask, "target", "horizon"?, "recipient"?}
//   POST   /sessions/{id}/reload        {"spec"?: [ref], "spec_text"?: str, "trees"?: [ref], "tree_texts"?: [str]}
//   GET    /sessions/{id}/history?from=N
//   GET    /sessions/{id}/subscribe?from=N   (text/event-stream)
class Service {
 public:
  using Clock = std::chrono::steady_clock;

  explicit Service(ServiceConfig config = {}, std::function<Clock::time_point()> now = Clock::now);

  Response handle(std::string_view method, std::string_view target, std::string_view body);

  // Feed items of a session starting at `from`; nullopt for an unknown session.
  std::optional<std::vector<FeedItem>> feed(const std::string& session_id, std::uint64_t from);
  // Blocks until the session's feed grows past `from` or `timeout` passes.
  bool wait_for_feed(const std::string& session_id, std::uint64_t from, std::chrono::milliseconds timeout);

  std::size_t expire_idle();
  std::size_t session_count() const;
  // Wakes every wait_for_feed caller; later waits return immediately.
  void shutdown();
  bool stopping() const { return stopping_; }
  const ServiceConfig& config() const { return config_; }

 private:
  struct Slot {
    std::mutex mutex;
    std::unique_ptr<Session> session;
    std::string scene;
    std::string recipient;
    std::vector<FeedItem> feed;
    std::uint64_t exported = 0;  // history entries already in the feed
    Clock::time_point last_used;
  };

  std::shared_ptr<Slot> find(const std::string& id);
  void sync_feed(Slot& slot);
  Response dispatch(Slot& slot, std::string_view method, const std::string& action, std::string_view body,
                    const std::map<std::string, std::string>& query);

  ServiceConfig config_;
  std::function<Clock::time_point()> now_;
  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Slot>> sessions_;
  std::uint64_t next_id_ = 1;
  std::condition_variable_any feed_changed_;
  std::atomic<bool> stopping_{false};
};

// HTTP transport for a Service. `bind` picks a free port when the listen
// address has port 0; `run` blocks until `stop`.
class HttpServer {
 public:
  explicit HttpServer(ServiceConfig config);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Bound port, or -1 when the address cannot be bound.
  int bind();
  bool run();
  void stop();
  Service& service();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// HttpServer on config.listen until it stops. Returns false when the
// address cannot be bound.
bool serve(const ServiceConfig& config);

}  // namespace mabex::service
