#ifndef MABEX_H
#define MABEX_H

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define MABEX_API __declspec(dllexport)
#else
#define MABEX_API __attribute__((visibility("default")))
#endif

typedef enum mabex_status {
  MABEX_OK = 0,
  MABEX_INVALID_ARGUMENT = 1,
  MABEX_PARSE = 2,          /* spec, tree, event or config text rejected */
  MABEX_UNKNOWN_SCENE = 3,
  MABEX_VIOLATION = 4,      /* the command ran and the engine reported a violation */
  MABEX_IO = 5,
  MABEX_QUERY = 6,          /* a command or query failed (bad target, unmapped query, ...) */
  MABEX_INTERNAL = 7
} mabex_status;

typedef struct mabex_session mabex_session;

/* Message of the last non-OK status on this thread; never NULL. */
MABEX_API const char* mabex_last_error(void);
MABEX_API const char* mabex_status_name(mabex_status status);
MABEX_API const char* mabex_version(void);

/* Strings returned through char** out-parameters are owned by the caller. */
MABEX_API void mabex_string_free(char* s);

/* Parses and validates a spec against the V2X schema. *diagnostics gets one
   "file:line:col: severity: message" line per finding. MABEX_PARSE when
   the text does not parse or any diagnostic is an error. */
MABEX_API mabex_status mabex_check_spec(const char* text, const char* file_name, char** diagnostics);

/* options_json may be NULL or an object with "strip_annotations",
   "with_trees", "ledger_path". scene_dir may be NULL. */
MABEX_API mabex_status mabex_session_open(const char* scene, const char* scene_dir, const char* options_json,
                                          mabex_session** out);
MABEX_API void mabex_session_close(mabex_session* session);

/* Transcript header for the session ("# ..." lines). */
MABEX_API mabex_status mabex_session_header(mabex_session* session, const char* recipient, char** out);

/* One script command (inject, step, run, why, whycond, when, whynot, ask,
   followups, ledger, reload, react, history). *output gets the transcript
   lines it produced. */
MABEX_API mabex_status mabex_session_command(mabex_session* session, const char* line, const char* recipient,
                                             char** output);

/* kind: why | whycond | when | whynot | ask. *answer_json gets the answer
   object (ok, kind, text, follow_ups, structured). horizon < 0 means default. */
MABEX_API mabex_status mabex_session_query(mabex_session* session, const char* kind, const char* target,
                                           const char* recipient, int horizon, char** answer_json);

/* History as JSON lines. */
MABEX_API mabex_status mabex_session_history(mabex_session* session, char** jsonl);

/* Loads the scene (options_json as for mabex_session_open), runs every
   script line and returns the transcript. The
   transcript is produced even when the status is MABEX_VIOLATION or
   MABEX_QUERY. */
MABEX_API mabex_status mabex_run_script(const char* scene, const char* scene_dir, const char* options_json,
                                        const char* script, const char* recipient, char** transcript);

/* Blocking HTTP service. NULL arguments fall back to MABEX_LISTEN,
   MABEX_SCENE_DIR, MABEX_SESSION_TTL; ttl_seconds 0 likewise. */
MABEX_API mabex_status mabex_serve(const char* listen, const char* scene_dir, unsigned ttl_seconds);

#ifdef __cplusplus
}
#endif

#endif
