#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mabex/causality.hpp"
#include "mabex/playout.hpp"
#include "mabex/wire.hpp"

namespace mabex {

// ---------------------------------------------------------------------------
// Monitor
// ---------------------------------------------------------------------------

enum class RecordKind { event, snapshot, user_query, recipient_reaction };
std::string_view to_string(RecordKind k);

struct MonitorRecord {
  RecordKind kind = RecordKind::event;
  std::uint64_t timestamp = 0;  // arrival order, assigned on ingest (1-based)
  std::uint64_t history_step = 0;
  std::optional<Event> event;
  std::optional<ObjectSnapshot> snapshot;  // world after the event / sampled state
  std::string text;                        // query text
  std::string recipient;
  bool helpful = false;  // reaction records
};

class MonitorStream {
 public:
  const MonitorRecord& ingest(MonitorRecord record);
  const std::vector<MonitorRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

 private:
  std::vector<MonitorRecord> records_;
};

MonitorRecord event_record(const HistoryEntry& entry);
MonitorRecord query_record(std::string text, std::string recipient);
MonitorRecord reaction_record(std::string recipient, bool helpful);

// ---------------------------------------------------------------------------
// Configuration: trigger rules, query map, recipients
// ---------------------------------------------------------------------------

struct TriggerRule {
  std::string id;
  MessagePattern event_pattern;
  Expr state_predicate;  // empty: always
  std::string behavior_label;
};

struct QueryMapping {
  std::string text;
  Expr condition;                       // whycond target, or
  std::optional<MessagePattern> future;  // when target
  std::size_t horizon = 3;
};

enum class Audience { end_user, engineer, machine };
enum class Format { textual, structured };
std::string_view to_string(Audience a);
Audience parse_audience(std::string_view text);

struct RecipientModel {
  std::string id = "driver";
  Audience audience = Audience::end_user;
  Format format = Format::textual;
  std::size_t verbosity_depth = 1;
};

RecipientModel default_recipient(Audience a);

struct LoopConfig {
  std::vector<TriggerRule> rules;
  std::vector<QueryMapping> queries;
  std::vector<RecipientModel> recipients;

  const QueryMapping* find_query(std::string_view text) const;
  // Label of the mapping whose condition equals `condition`, if any.
  std::optional<std::string> label_for(const Expr& condition) const;
};

LoopConfig parse_config(std::string_view json_text);

// ---------------------------------------------------------------------------
// Analyze
// ---------------------------------------------------------------------------

enum class NeedKind { system_triggered, user_query };
std::string_view to_string(NeedKind k);

struct EventTarget {
  std::uint64_t step = 0;  // history step index
};
struct ConditionTarget {
  Expr condition;
};
struct FutureTarget {
  MessagePattern pattern;
  std::size_t horizon = 3;
};

struct ExplanationNeed {
  NeedKind kind = NeedKind::user_query;
  std::variant<EventTarget, ConditionTarget, FutureTarget> target;
  std::string recipient;
  std::optional<std::string> origin_rule;
  std::string behavior_label;
  std::string target_text;  // event text, condition text or pattern text
};

// Stable identity of a need's behaviour, used by the ledger.
std::string target_key(const ExplanationNeed& need);

struct AnalyzeResult {
  std::vector<ExplanationNeed> needs;
  std::vector<std::string> unmapped_queries;
};

class RuleError : public Error {
 public:
  RuleError(std::string rule_id, const std::string& message)
      : Error("rule '" + rule_id + "': " + message), rule_id_(std::move(rule_id)) {}
  const std::string& rule_id() const { return rule_id_; }

 private:
  std::string rule_id_;
};

// Consumes each stream record at most once across calls.
class Analyzer {
 public:
  AnalyzeResult analyze(const MonitorStream& stream, const LoopConfig& config, const ObjectSchema& schema);
  std::size_t consumed() const { return consumed_; }

 private:
  std::size_t consumed_ = 0;
};

// ---------------------------------------------------------------------------
// Build
// ---------------------------------------------------------------------------

struct Provenance {
  enum class Source { scenario, tree, history } source = Source::scenario;
  std::string scenario;
  std::string step;  // scenario step id
  std::string instance;
  std::string tree;  // tree root id
  std::string node;  // node ids joined with '+'
};

struct Cause {
  std::string subject_clause;  // empty for a bare reason
  std::string reason_clause;
  Provenance provenance;
  std::vector<std::uint64_t> support;  // history steps
};

struct FollowUp {
  std::string label;
  ExplanationNeed need;
};

struct ExplanationIR {
  std::string subject_clause;
  std::string context;  // lead-in printed before the causes (flip traces)
  std::vector<Cause> causes;
  std::vector<FollowUp> follow_up_handles;
};

struct Unexplainable {
  std::string reason;
  bool learnable = true;  // false: nothing the models could ever add (e.g. no flip)
};

struct Forecast {
  std::string target;
  std::optional<std::size_t> steps;  // nullopt: unknown within the horizon
  std::vector<Event> witness;
  std::size_t horizon = 0;
};

using BuildResult = std::variant<ExplanationIR, Unexplainable, Forecast>;

// Splits "<subject> because <reason>" at the first " because "; a fragment
// without it is a bare reason.
std::pair<std::string, std::string> split_fragment(std::string_view fragment);

struct FlipResult {
  std::uint64_t step = 0;  // history step of the flip event
  Event event;
  std::vector<FiredAnnotation> annotations;
};
struct NoFlip {
  std::string reason = "initially_true";
};

class ConditionNotHolding : public Error {
 public:
  using Error::Error;
};

// Latest history entry whose post-state satisfies `condition` while its
// pre-state does not. Annotations are the current spec's annotations of the
// steps that entry advanced.
std::variant<FlipResult, NoFlip> trace_condition_flip(const Engine& engine, const Expr& condition);

struct Reachable {
  std::size_t steps = 0;
  std::vector<Event> witness;
};
struct Unknown {};
using LookaheadResult = std::variant<Reachable, Unknown>;

// Breadth-first over forks: a ply is one alphabet event followed by
// run_to_quiescence. The target counts as reached when it is executable
// at any point of a ply (before the system acts, or between its steps).
LookaheadResult lookahead_query(const Engine& engine, const MessagePattern& target,
                                const std::vector<Event>& alphabet, std::size_t horizon);

// True when an event matching `target` is executable now.
bool target_executable(const Engine& engine, const MessagePattern& target);

struct BuildModels {
  const Engine* engine = nullptr;
  const std::vector<CausalityTree>* trees = nullptr;
  const LoopConfig* config = nullptr;
  const std::vector<Event>* alphabet = nullptr;
  std::size_t tree_depth = 8;
};

BuildResult build_explanation(const ExplanationNeed& need, const BuildModels& models);

// Experimental: what currently keeps a matching event from executing.
struct WhyNotAnswer {
  std::string target;
  bool executable = false;
  bool requested = false;
  std::vector<Cause> blockers;
};
WhyNotAnswer explain_why_not(const Engine& engine, const MessagePattern& target);

// ---------------------------------------------------------------------------
// Explain
// ---------------------------------------------------------------------------

std::string render_explanation(const ExplanationIR& ir, const RecipientModel& recipient);
std::string render_forecast(const Forecast& f, const RecipientModel& recipient);
std::string render_why_not(const WhyNotAnswer& w, const RecipientModel& recipient);

wire::Json to_json(const ExplanationNeed& need);
wire::Json to_json(const ExplanationIR& ir);
wire::Json to_json(const Forecast& f);

// ---------------------------------------------------------------------------
// Model learning
// ---------------------------------------------------------------------------

enum class LedgerStatus { pending, resolved };

struct PendingLedgerEntry {
  std::string id;
  ExplanationNeed need;
  std::uint64_t first_seen = 0;
  LedgerStatus status = LedgerStatus::pending;
  std::optional<ExplanationIR> resolution;
};

// Append-only; entries are never removed and only move pending -> resolved.
// With a path, every change is appended to that file as one JSON line.
class Ledger {
 public:
  Ledger() = default;
  explicit Ledger(std::string path) : path_(std::move(path)) {}

  // Deduplicated by (target_key, behavior_label).
  const PendingLedgerEntry& record_unexplained(const ExplanationNeed& need, std::uint64_t step);
  void resolve(const std::string& id, ExplanationIR ir);

  const std::vector<PendingLedgerEntry>& entries() const { return entries_; }
  std::size_t pending_count() const;

 private:
  void append(const wire::Json& line) const;

  std::string path_;
  std::vector<PendingLedgerEntry> entries_;
};

struct ReloadReport {
  bool accepted = false;
  std::string error;
  std::vector<std::string> resolved;  // ledger entry ids
  std::size_t still_pending = 0;
};

// ---------------------------------------------------------------------------
// Session: one engine plus its loop state
// ---------------------------------------------------------------------------

struct Answer {
  bool ok = true;
  std::string kind;  // why | whycond | when | whynot | query
  std::string text;
  std::vector<FollowUp> follow_ups;
  wire::Json structured;
  std::string error_code;  // when !ok: unknown_target | condition_not_holding | unexplainable | bad_request
};

struct SessionNotice {
  std::string kind;  // need | unexplained | unmapped_query
  wire::Json body;
};

class Session {
 public:
  Session(Engine engine, LoopConfig config, std::vector<CausalityTree> trees, std::vector<Event> alphabet = {},
          std::string ledger_path = {});

  Engine& engine() { return engine_; }
  const Engine& engine() const { return engine_; }
  const LoopConfig& config() const { return config_; }
  const std::vector<CausalityTree>& trees() const { return trees_; }
  const std::vector<Event>& alphabet() const { return alphabet_; }
  const MonitorStream& stream() const { return stream_; }
  const Ledger& ledger() const { return ledger_; }
  const std::vector<ExplanationNeed>& needs() const { return needs_; }
  // Handles offered by the most recent why / whycond answer.
  const std::vector<FollowUp>& last_follow_ups() const { return last_follow_ups_; }

  // Engine operations; each is followed by one loop iteration.
  StepResult inject(const Event& e);
  StepResult inject(std::string_view event_text);
  StepResult step();
  RunResult run();

  // Monitor new history, analyze, build system-triggered needs and record
  // the unexplained ones. Returns notices produced by this iteration.
  std::vector<SessionNotice> iterate();
  // Notices accumulated since the last call.
  std::vector<SessionNotice> take_notices();

  RecipientModel& recipient(const std::string& id);
  RecipientModel& recipient_for(Audience a);
  void react(const std::string& recipient_id, bool helpful);

  // `ref`: a history step number, "last", or an event text / pattern
  // (latest matching entry).
  Answer why(std::string_view ref, const std::string& recipient_id);
  // Asking for a condition offered as a follow-up of the previous answer
  // deepens that recipient's verbosity by one.
  Answer why_condition(std::string_view condition, const std::string& recipient_id);
  Answer when(std::string_view pattern, std::optional<std::size_t> horizon, const std::string& recipient_id);
  Answer why_not(std::string_view pattern, const std::string& recipient_id);
  // Free-text query through the query map.
  Answer ask(std::string_view text, const std::string& recipient_id);
  Answer answer(const ExplanationNeed& need, const std::string& recipient_id);

  // Swaps models atomically; nullopt keeps the current one. Every pending
  // ledger entry is retried afterwards.
  ReloadReport reload(std::optional<ScenarioSpec> spec, std::optional<std::vector<CausalityTree>> trees);

  std::optional<std::uint64_t> resolve_event_ref(std::string_view ref) const;

 private:
  BuildModels models() const;

  Engine engine_;
  LoopConfig config_;
  std::vector<CausalityTree> trees_;
  std::vector<Event> alphabet_;
  MonitorStream stream_;
  Analyzer analyzer_;
  Ledger ledger_;
  std::vector<ExplanationNeed> needs_;
  std::map<std::string, RecipientModel> recipients_;
  std::uint64_t monitored_ = 0;  // history entries already ingested
  std::vector<FollowUp> last_follow_ups_;
  std::vector<SessionNotice> notices_;
};

}  // namespace mabex
