#include "mabex/mabex.h"

#include <cstdlib>
#include <cstring>

#include "mabex/service.hpp"
#include "mabex/v2x.hpp"

struct mabex_session {
  std::unique_ptr<mabex::Session> session;
  std::string scene;
};

namespace {

thread_local std::string last_error;

mabex_status fail(mabex_status s, std::string message) {
  last_error = std::move(message);
  return s;
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::string str(const char* s) { return s ? s : ""; }

// Runs `body`, translating exceptions into status codes.
template <typename F>
mabex_status guarded(F&& body) {
  try {
    return body();
  } catch (const mabex::v2x::UnknownScene& e) {
    return fail(MABEX_UNKNOWN_SCENE, e.what());
  } catch (const mabex::ParseError& e) {
    return fail(MABEX_PARSE, e.what());
  } catch (const mabex::wire::Json::exception& e) {
    return fail(MABEX_PARSE, e.what());
  } catch (const mabex::Error& e) {
    return fail(MABEX_QUERY, e.what());
  } catch (const std::bad_alloc&) {
    return fail(MABEX_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(MABEX_INTERNAL, e.what());
  }
}

mabex_status transcript_status(const mabex::v2x::Transcript& t) {
  if (t.violation) return fail(MABEX_VIOLATION, "the engine reported a violation");
  if (t.error) return fail(MABEX_QUERY, "a command failed");
  return MABEX_OK;
}

}  // namespace

extern "C" {

const char* mabex_last_error(void) { return last_error.c_str(); }

const char* mabex_status_name(mabex_status s) {
  switch (s) {
    case MABEX_OK: return "ok";
    case MABEX_INVALID_ARGUMENT: return "invalid_argument";
    case MABEX_PARSE: return "parse";
    case MABEX_UNKNOWN_SCENE: return "unknown_scene";
    case MABEX_VIOLATION: return "violation";
    case MABEX_IO: return "io";
    case MABEX_QUERY: return "query";
    case MABEX_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* mabex_version(void) { return "0.1.0"; }

void mabex_string_free(char* s) { std::free(s); }

mabex_status mabex_check_spec(const char* text, const char* file_name, char** diagnostics) {
  if (!text || !diagnostics) return fail(MABEX_INVALID_ARGUMENT, "text and diagnostics must not be NULL");
  *diagnostics = nullptr;
  std::string file = file_name ? file_name : "<input>";
  return guarded([&] {
    std::string out;
    bool errors = false;
    try {
      mabex::ScenarioSpec spec = mabex::parse_specification(text);
      auto diags = mabex::validate(spec, mabex::validation_schema(mabex::v2x::fig2_world()));
      for (const auto& d : diags) {
        out += mabex::format_diagnostic(d, file) + "\n";
        errors = errors || d.severity == mabex::Severity::error;
      }
    } catch (const mabex::ParseError& e) {
      out += mabex::format_diagnostic(mabex::to_diagnostic(e), file) + "\n";
      errors = true;
    }
    *diagnostics = dup(out);
    if (errors) return fail(MABEX_PARSE, file + ": specification has errors");
    return MABEX_OK;
  });
}

static mabex::v2x::SceneOptions scene_options(const char* options_json) {
  mabex::v2x::SceneOptions opts;
  if (options_json && *options_json) {
    auto j = mabex::wire::Json::parse(options_json);
    if (!j.is_object()) throw mabex::ParseError({}, "options must be a JSON object");
    opts.strip_annotations = j.value("strip_annotations", false);
    opts.with_trees = j.value("with_trees", true);
    opts.ledger_path = j.value("ledger_path", "");
  }
  return opts;
}

mabex_status mabex_session_open(const char* scene, const char* scene_dir, const char* options_json,
                                mabex_session** out) {
  if (!scene || !out) return fail(MABEX_INVALID_ARGUMENT, "scene and out must not be NULL");
  *out = nullptr;
  return guarded([&] {
    auto h = std::make_unique<mabex_session>();
    h->session = mabex::v2x::load_scene(scene, scene_options(options_json), str(scene_dir));
    h->scene = scene;
    *out = h.release();
    return MABEX_OK;
  });
}

void mabex_session_close(mabex_session* session) { delete session; }

mabex_status mabex_session_header(mabex_session* session, const char* recipient, char** out) {
  if (!session || !out) return fail(MABEX_INVALID_ARGUMENT, "session and out must not be NULL");
  return guarded([&] {
    mabex::v2x::ScriptOptions o{session->scene, mabex::v2x::recipient_id(str(recipient)), {}};
    *out = dup(mabex::v2x::transcript_header(*session->session, o));
    return MABEX_OK;
  });
}

mabex_status mabex_session_command(mabex_session* session, const char* line, const char* recipient,
                                   char** output) {
  if (!session || !line || !output) return fail(MABEX_INVALID_ARGUMENT, "session, line and output must not be NULL");
  *output = nullptr;
  return guarded([&] {
    mabex::v2x::ScriptOptions o{session->scene, mabex::v2x::recipient_id(str(recipient)), {}};
    mabex::v2x::Transcript t;
    mabex::v2x::run_command(*session->session, line, o, t);
    *output = dup(t.text);
    return transcript_status(t);
  });
}

mabex_status mabex_session_query(mabex_session* session, const char* kind, const char* target,
                                 const char* recipient, int horizon, char** answer_json) {
  if (!session || !kind || !answer_json) return fail(MABEX_INVALID_ARGUMENT, "session, kind and answer_json must not be NULL");
  *answer_json = nullptr;
  return guarded([&] {
    mabex::Session& s = *session->session;
    std::string k = kind, t = str(target), rid = mabex::v2x::recipient_id(str(recipient));
    mabex::Answer a;
    if (k == "why") {
      a = s.why(t.empty() ? "last" : t, rid);
    } else if (k == "whycond") {
      a = s.why_condition(t, rid);
    } else if (k == "when") {
      std::optional<std::size_t> h;
      if (horizon >= 0) h = static_cast<std::size_t>(horizon);
      a = s.when(t, h, rid);
    } else if (k == "whynot") {
      a = s.why_not(t, rid);
    } else if (k == "ask") {
      a = s.ask(t, rid);
    } else {
      return fail(MABEX_INVALID_ARGUMENT, "unknown query kind '" + k + "'");
    }
    *answer_json = dup(mabex::service::to_json(a).dump());
    if (!a.ok) return fail(MABEX_QUERY, a.text);
    return MABEX_OK;
  });
}

mabex_status mabex_session_history(mabex_session* session, char** jsonl) {
  if (!session || !jsonl) return fail(MABEX_INVALID_ARGUMENT, "session and jsonl must not be NULL");
  return guarded([&] {
    *jsonl = dup(mabex::export_history(session->session->engine().history()));
    return MABEX_OK;
  });
}

mabex_status mabex_run_script(const char* scene, const char* scene_dir, const char* options_json, const char* script,
                              const char* recipient, char** transcript) {
  if (!scene || !script || !transcript) return fail(MABEX_INVALID_ARGUMENT, "scene, script and transcript must not be NULL");
  *transcript = nullptr;
  return guarded([&] {
    auto session = mabex::v2x::load_scene(scene, scene_options(options_json), str(scene_dir));
    mabex::v2x::ScriptOptions o{scene, mabex::v2x::recipient_id(str(recipient)), {}};
    auto t = mabex::v2x::run_script(*session, script, o);
    *transcript = dup(t.text);
    return transcript_status(t);
  });
}

mabex_status mabex_serve(const char* listen, const char* scene_dir, unsigned ttl_seconds) {
  return guarded([&] {
    auto cfg = mabex::service::ServiceConfig::from_env();
    if (listen) cfg.listen = listen;
    if (scene_dir) cfg.scene_dir = scene_dir;
    if (ttl_seconds) cfg.session_ttl = std::chrono::seconds(ttl_seconds);
    if (!mabex::service::serve(cfg)) return fail(MABEX_IO, "cannot listen on " + cfg.listen);
    return MABEX_OK;
  });
}

}  // extern "C"
