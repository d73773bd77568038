#include "mabex/service.hpp"

#include <httplib.h>

#include <cstdlib>
#include <iostream>

namespace mabex::service {

namespace {

using wire::Json;

struct HttpError {
  int status;
  std::string code;
  std::string message;
};

Response json_response(int status, Json body) {
  Json out{{"schema", wire::kSchema}};
  for (auto it = body.begin(); it != body.end(); ++it) out[it.key()] = it.value();
  return {status, "application/json", out.dump()};
}

Response error_response(const HttpError& e) {
  return json_response(e.status, {{"ok", false}, {"error", {{"code", e.code}, {"message", e.message}}}});
}

Json parse_body(std::string_view body) {
  if (body.find_first_not_of(" \t\r\n") == std::string_view::npos) return Json::object();
  Json j = Json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw HttpError{400, "bad_request", "request body must be a JSON object"};
  if (j.contains("schema") && j["schema"] != wire::kSchema) {
    throw HttpError{400, "bad_schema", "unsupported schema " + j["schema"].dump()};
  }
  return j;
}

std::string string_field(const Json& j, const char* name, bool required = true) {
  if (!j.contains(name)) {
    if (required) throw HttpError{400, "bad_request", std::string("missing field '") + name + "'"};
    return {};
  }
  if (!j[name].is_string()) throw HttpError{400, "bad_request", std::string("field '") + name + "' must be a string"};
  return j[name].get<std::string>();
}

std::map<std::string, std::string> parse_query(std::string_view q) {
  std::map<std::string, std::string> out;
  std::size_t pos = 0;
  while (pos < q.size()) {
    auto amp = q.find('&', pos);
    std::string_view part = q.substr(pos, amp == std::string_view::npos ? std::string_view::npos : amp - pos);
    auto eq = part.find('=');
    if (eq == std::string_view::npos) {
      out[std::string(part)] = "";
    } else {
      out[std::string(part.substr(0, eq))] = httplib::detail::decode_url(std::string(part.substr(eq + 1)), true);
    }
    if (amp == std::string_view::npos) break;
    pos = amp + 1;
  }
  return out;
}

std::uint64_t query_number(const std::map<std::string, std::string>& q, const std::string& key) {
  auto it = q.find(key);
  if (it == q.end() || it->second.empty()) return 0;
  const std::string& v = it->second;
  if (!std::all_of(v.begin(), v.end(), [](unsigned char c) { return std::isdigit(c); })) {
    throw HttpError{400, "bad_request", "'" + key + "' must be a number"};
  }
  return std::stoull(v);
}

Json history_json(const HistoryEntry& entry) {
  Json j = Json::parse(export_history_line(entry));
  j["snapshot"] = wire::to_json(entry.snapshot_after);
  return j;
}

std::vector<std::string> split_path(std::string_view path) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < path.size()) {
    auto slash = path.find('/', pos);
    if (slash == std::string_view::npos) slash = path.size();
    if (slash > pos) out.emplace_back(path.substr(pos, slash - pos));
    pos = slash + 1;
  }
  return out;
}

}  // namespace

ServiceConfig ServiceConfig::from_env() {
  ServiceConfig c;
  if (const char* v = std::getenv("MABEX_LISTEN"); v && *v) c.listen = v;
  if (const char* v = std::getenv("MABEX_SCENE_DIR"); v && *v) c.scene_dir = v;
  if (const char* v = std::getenv("MABEX_SESSION_TTL"); v && *v) {
    char* end = nullptr;
    long long s = std::strtoll(v, &end, 10);
    if (end && *end == '\0' && s > 0) c.session_ttl = std::chrono::seconds(s);
  }
  return c;
}

Json to_json(const Answer& a) {
  Json follow_ups = Json::array();
  for (const auto& f : a.follow_ups) follow_ups.push_back({{"label", f.label}, {"need", mabex::to_json(f.need)}});
  Json j{{"ok", a.ok}, {"kind", a.kind}, {"text", a.text}, {"follow_ups", follow_ups}};
  j["structured"] = a.structured.is_null() ? Json::object() : a.structured;
  if (!a.ok) j["error_code"] = a.error_code;
  return j;
}

Json to_json(const StepResult& r) {
  if (auto ex = std::get_if<ExecutedEvent>(&r)) {
    return {{"kind", "executed"}, {"event", wire::to_json(ex->event)}, {"step_index", ex->event.step_index}};
  }
  if (auto v = std::get_if<Violation>(&r)) {
    return {{"kind", "violation"},
            {"instance", v->instance},
            {"reason", std::string(to_string(v->reason))},
            {"deadlock", v->deadlock},
            {"event", wire::to_json(v->event)}};
  }
  return {{"kind", "quiescent"}};
}

std::string sse_frame(const FeedItem& item) {
  return "id: " + std::to_string(item.id) + "\nevent: " + item.event + "\ndata: " + item.data.dump() + "\n\n";
}

Service::Service(ServiceConfig config, std::function<Clock::time_point()> now)
    : config_(std::move(config)), now_(std::move(now)) {}

std::size_t Service::session_count() const {
  std::lock_guard lock(sessions_mutex_);
  return sessions_.size();
}

std::size_t Service::expire_idle() {
  std::lock_guard lock(sessions_mutex_);
  auto now = now_();
  std::size_t n = 0;
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    std::unique_lock slot_lock(it->second->mutex, std::try_to_lock);
    if (slot_lock.owns_lock() && now - it->second->last_used > config_.session_ttl) {
      slot_lock.unlock();
      it = sessions_.erase(it);
      ++n;
    } else {
      ++it;
    }
  }
  return n;
}

std::shared_ptr<Service::Slot> Service::find(const std::string& id) {
  std::lock_guard lock(sessions_mutex_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

void Service::sync_feed(Slot& slot) {
  const auto& history = slot.session->engine().history();
  for (; slot.exported < history.size(); ++slot.exported) {
    slot.feed.push_back({slot.feed.size(), "history", history_json(history[slot.exported])});
  }
  for (auto& n : slot.session->take_notices()) slot.feed.push_back({slot.feed.size(), n.kind, std::move(n.body)});
}

std::optional<std::vector<FeedItem>> Service::feed(const std::string& session_id, std::uint64_t from) {
  auto slot = find(session_id);
  if (!slot) return std::nullopt;
  std::lock_guard lock(slot->mutex);
  std::vector<FeedItem> out;
  for (std::uint64_t i = from; i < slot->feed.size(); ++i) out.push_back(slot->feed[i]);
  return out;
}

bool Service::wait_for_feed(const std::string& session_id, std::uint64_t from, std::chrono::milliseconds timeout) {
  auto slot = find(session_id);
  if (!slot) return false;
  std::unique_lock lock(slot->mutex);
  return feed_changed_.wait_for(lock, timeout, [&] { return stopping_ || slot->feed.size() > from; }) && !stopping_;
}

void Service::shutdown() {
  stopping_ = true;
  std::vector<std::shared_ptr<Slot>> slots;
  {
    std::lock_guard lock(sessions_mutex_);
    for (const auto& [id, slot] : sessions_) slots.push_back(slot);
  }
  // Taking each slot lock orders the flag before any waiter's predicate check.
  for (const auto& slot : slots) std::lock_guard lock(slot->mutex);
  feed_changed_.notify_all();
}

Response Service::handle(std::string_view method, std::string_view target, std::string_view body) {
  expire_idle();
  std::string_view path = target;
  std::map<std::string, std::string> query;
  if (auto q = target.find('?'); q != std::string_view::npos) {
    path = target.substr(0, q);
    query = parse_query(target.substr(q + 1));
  }
  auto parts = split_path(path);
  try {
    if (parts.empty() || parts[0] != "sessions") throw HttpError{404, "not_found", "no such endpoint"};

    if (parts.size() == 1) {
      if (method != "POST") throw HttpError{405, "method_not_allowed", "use POST /sessions"};
      Json req = parse_body(body);
      std::string scene = string_field(req, "scene");
      v2x::SceneOptions opts;
      opts.strip_annotations = req.value("strip_annotations", false);
      auto slot = std::make_shared<Slot>();
      try {
        slot->session = v2x::load_scene(scene, opts, config_.scene_dir);
      } catch (const v2x::UnknownScene& e) {
        throw HttpError{404, "unknown_scene", e.what()};
      } catch (const Error& e) {
        throw HttpError{422, "scene_error", e.what()};
      }
      slot->scene = scene;
      slot->recipient = v2x::recipient_id(string_field(req, "recipient", false));
      slot->last_used = now_();
      sync_feed(*slot);
      std::string id;
      {
        std::lock_guard lock(sessions_mutex_);
        id = "s" + std::to_string(next_id_++);
        sessions_[id] = slot;
      }
      return json_response(201, {{"ok", true},
                                 {"session", id},
                                 {"scene", scene},
                                 {"history_length", slot->session->engine().history().size()},
                                 {"feed_length", slot->feed.size()}});
    }

    auto slot = find(parts[1]);
    if (!slot) throw HttpError{404, "unknown_session", "no session '" + parts[1] + "'"};
    if (parts.size() == 2) {
      if (method != "DELETE") throw HttpError{405, "method_not_allowed", "use DELETE /sessions/{id}"};
      std::lock_guard lock(sessions_mutex_);
      sessions_.erase(parts[1]);
      return json_response(200, {{"ok", true}});
    }
    if (parts.size() != 3) throw HttpError{404, "not_found", "no such endpoint"};
    Response r;
    {
      std::lock_guard lock(slot->mutex);
      slot->last_used = now_();
      r = dispatch(*slot, method, parts[2], body, query);
    }
    feed_changed_.notify_all();
    return r;
  } catch (const HttpError& e) {
    return error_response(e);
  } catch (const Json::exception& e) {
    return error_response({400, "bad_request", e.what()});
  }
}

Response Service::dispatch(Slot& slot, std::string_view method, const std::string& action, std::string_view body,
                           const std::map<std::string, std::string>& query) {
  Session& session = *slot.session;
  auto require = [&](std::string_view m) {
    if (method != m) throw HttpError{405, "method_not_allowed", "use " + std::string(m) + " for " + action};
  };
  auto with_delta = [&](Json res) {
    std::uint64_t before = slot.exported;
    sync_feed(slot);
    Json delta = Json::array();
    const auto& history = session.engine().history();
    for (std::uint64_t i = before; i < history.size(); ++i) delta.push_back(history_json(history[i]));
    res["delta"] = delta;
    res["feed_length"] = slot.feed.size();
    return json_response(200, res);
  };

  if (action == "events") {
    require("POST");
    Json req = parse_body(body);
    std::string text = string_field(req, "event");
    StepResult r;
    try {
      r = session.inject(text);
    } catch (const ParseError& e) {
      throw HttpError{400, "malformed_event", e.what()};
    } catch (const Error& e) {
      throw HttpError{422, "rejected_event", e.what()};
    }
    return with_delta({{"ok", true}, {"result", to_json(r)}});
  }
  if (action == "step") {
    require("POST");
    Json req = parse_body(body);
    try {
      if (req.value("run", false)) {
        RunResult rr = session.run();
        Json events = Json::array();
        for (const auto& e : rr.events) events.push_back(wire::to_json(e));
        Json res{{"ok", true}, {"events", events}};
        res["result"] = rr.violation ? to_json(StepResult(*rr.violation)) : to_json(StepResult(Quiescent{}));
        return with_delta(res);
      }
      return with_delta({{"ok", true}, {"result", to_json(session.step())}});
    } catch (const Error& e) {
      throw HttpError{422, "engine_error", e.what()};
    }
  }
  if (action == "query") {
    require("POST");
    Json req = parse_body(body);
    std::string kind = string_field(req, "kind");
    std::string target = string_field(req, "target", kind != "why");
    std::string rid = string_field(req, "recipient", false);
    rid = rid.empty() ? slot.recipient : v2x::recipient_id(rid);
    Answer a;
    if (kind == "why") {
      a = session.why(target.empty() ? "last" : target, rid);
    } else if (kind == "whycond") {
      a = session.why_condition(target, rid);
    } else if (kind == "when") {
      std::optional<std::size_t> horizon;
      if (req.contains("horizon")) {
        if (!req["horizon"].is_number_unsigned()) throw HttpError{400, "bad_request", "horizon must be a natural number"};
        horizon = req["horizon"].get<std::size_t>();
      }
      a = session.when(target, horizon, rid);
    } else if (kind == "whynot") {
      a = session.why_not(target, rid);
    } else if (kind == "ask") {
      a = session.ask(target, rid);
    } else {
      throw HttpError{400, "bad_request", "unknown query kind '" + kind + "'"};
    }
    sync_feed(slot);
    if (!a.ok && (a.error_code == "unknown_target" || a.error_code == "bad_request")) {
      Json res = to_json(a);
      res["ok"] = false;
      res["error"] = {{"code", a.error_code}, {"message", a.text}};
      return json_response(a.error_code == "unknown_target" ? 404 : 400, res);
    }
    return json_response(200, to_json(a));
  }
  if (action == "reload") {
    require("POST");
    Json req = parse_body(body);
    std::optional<ScenarioSpec> spec;
    std::optional<std::vector<CausalityTree>> trees;
    try {
      auto add_spec = [&](const std::string& text) {
        spec = spec ? merge(*spec, parse_specification(text)) : parse_specification(text);
      };
      for (const auto& ref : req.value("spec", std::vector<std::string>{})) add_spec(v2x::read_resource(ref));
      if (req.contains("spec_text")) add_spec(string_field(req, "spec_text"));
      auto add_tree = [&](const std::string& text) {
        if (!trees) trees.emplace();
        trees->push_back(load_tree(text));
      };
      for (const auto& ref : req.value("trees", std::vector<std::string>{})) add_tree(v2x::read_resource(ref));
      for (const auto& text : req.value("tree_texts", std::vector<std::string>{})) add_tree(text);
    } catch (const ParseError& e) {
      throw HttpError{422, "model_rejected", e.what()};
    } catch (const Json::exception&) {
      throw;
    } catch (const Error& e) {
      throw HttpError{422, "model_rejected", e.what()};
    }
    ReloadReport rep = session.reload(std::move(spec), std::move(trees));
    if (!rep.accepted) throw HttpError{422, "model_rejected", rep.error};
    Json body_out{{"ok", true}, {"resolved", rep.resolved}, {"still_pending", rep.still_pending}};
    slot.feed.push_back({slot.feed.size(), "reload", body_out});
    sync_feed(slot);
    return json_response(200, body_out);
  }
  if (action == "history") {
    require("GET");
    std::uint64_t from = query_number(query, "from");
    Json entries = Json::array();
    const auto& history = session.engine().history();
    for (std::uint64_t i = from > 0 ? from - 1 : 0; i < history.size(); ++i) entries.push_back(history_json(history[i]));
    return json_response(200, {{"ok", true}, {"entries", entries}});
  }
  if (action == "subscribe") {
    require("GET");
    std::uint64_t from = query_number(query, "from");
    std::string out;
    for (std::uint64_t i = from; i < slot.feed.size(); ++i) out += sse_frame(slot.feed[i]);
    return {200, "text/event-stream", out};
  }
  throw HttpError{404, "not_found", "no such endpoint '" + action + "'"};
}

struct HttpServer::Impl {
  ServiceConfig config;
  Service service;
  httplib::Server server;
  std::string host;
  int port = 8080;

  explicit Impl(ServiceConfig c) : config(c), service(std::move(c)) {
    host = config.listen;
    if (auto colon = host.rfind(':'); colon != std::string::npos) {
      port = std::atoi(host.c_str() + colon + 1);
      host = host.substr(0, colon);
    }
    if (host.empty()) host = "0.0.0.0";
    routes();
  }

  void forward(const httplib::Request& req, httplib::Response& res) {
    std::string target = req.path;
    if (!req.params.empty()) {
      target += "?";
      bool first = true;
      for (const auto& [k, v] : req.params) {
        if (!first) target += "&";
        first = false;
        target += k + "=" + httplib::detail::encode_url(v);
      }
    }
    Response r = service.handle(req.method, target, req.body);
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  }

  void subscribe(const httplib::Request& req, httplib::Response& res) {
    std::string id = req.matches[1];
    std::uint64_t from = 0;
    if (req.has_param("from")) from = std::strtoull(req.get_param_value("from").c_str(), nullptr, 10);
    if (!service.feed(id, 0)) {
      forward(req, res);
      return;
    }
    res.set_header("Cache-Control", "no-cache");
    auto cursor = std::make_shared<std::uint64_t>(from);
    res.set_chunked_content_provider("text/event-stream", [this, id, cursor](std::size_t, httplib::DataSink& sink) {
      auto items = service.feed(id, *cursor);
      if (!items || service.stopping()) {
        sink.done();
        return true;
      }
      for (const auto& item : *items) {
        std::string frame = sse_frame(item);
        if (!sink.write(frame.data(), frame.size())) return false;
        *cursor = item.id + 1;
      }
      if (items->empty() && !service.wait_for_feed(id, *cursor, std::chrono::seconds(15)) && !service.stopping()) {
        static const std::string ping = ": ping\n\n";
        if (!sink.write(ping.data(), ping.size())) return false;
      }
      return true;
    });
  }

  void routes() {
    auto fwd = [this](const httplib::Request& req, httplib::Response& res) { forward(req, res); };
    server.Post(R"(/sessions(/.*)?)", fwd);
    server.Get(R"(/sessions/[^/]+/history)", fwd);
    server.Delete(R"(/sessions/[^/]+)", fwd);
    server.Get(R"(/sessions/([^/]+)/subscribe)",
               [this](const httplib::Request& req, httplib::Response& res) { subscribe(req, res); });
  }
};

HttpServer::HttpServer(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}
HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
  if (impl_->port == 0) {
    impl_->port = impl_->server.bind_to_any_port(impl_->host);
    return impl_->port > 0 ? impl_->port : -1;
  }
  return impl_->server.bind_to_port(impl_->host, impl_->port) ? impl_->port : -1;
}

bool HttpServer::run() { return impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  impl_->service.shutdown();
  impl_->server.stop();
}

Service& HttpServer::service() { return impl_->service; }

bool serve(const ServiceConfig& config) {
  HttpServer server(config);
  int port = server.bind();
  if (port < 0) return false;
  std::cerr << "mabex service listening on port " << port << "\n";
  return server.run();
}

}  // namespace mabex::service
