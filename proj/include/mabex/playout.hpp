#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mabex/object_system.hpp"
#include "mabex/scenario.hpp"

namespace mabex {

struct Event {
  ObjectId sender;
  ObjectId receiver;
  std::optional<std::string> collection;
  std::string message;
  std::vector<Value> args;
  Realm origin = Realm::environment;
  std::uint64_t step_index = 0;  // 0 until executed

  // Same message instance; origin and step index are ignored.
  bool same_message(const Event& other) const {
    return sender == other.sender && receiver == other.receiver && collection == other.collection &&
           message == other.message && args == other.args;
  }
};

std::string to_string(const Event& e);
// Parses `sender -> receiver[.collection].message(args)`; argument names
// resolve to objects of `world`, otherwise to symbols. The origin is the
// sender's realm.
Event parse_event(std::string_view text, const ObjectSystem& world);

// Matches a concrete event; pattern terms equal to an object id match that
// object, `*` matches anything, any other term is a variable bound on first
// use (bindings are extended in place).
bool match_pattern(const MessagePattern& p, const Event& e, const ObjectSnapshot& world,
                   std::map<std::string, ObjectId>* bindings = nullptr);

enum class InstanceStatus { active, completed, violated, interrupted };
std::string_view to_string(InstanceStatus s);

struct ScenarioInstance {
  std::string id;
  std::size_t scenario = 0;
  std::string scenario_name;
  std::map<std::string, ObjectId> bindings;
  StepPath cut;
  InstanceStatus status = InstanceStatus::active;
  std::uint64_t spawned_at = 0;
};

enum class TransitionKind { spawned, advanced, terminated, violated, interrupted };
std::string_view to_string(TransitionKind k);

struct InstanceTransition {
  std::string instance;
  TransitionKind kind = TransitionKind::advanced;
  std::string scenario;
  std::string step;  // consumed step id for spawned/advanced

  friend bool operator==(const InstanceTransition&, const InstanceTransition&) = default;
};

struct FiredAnnotation {
  std::string scenario;
  std::string step;
  std::string instance;
  std::string text;

  friend bool operator==(const FiredAnnotation&, const FiredAnnotation&) = default;
};

// A forbidden constraint in scope just before an event, grounded to objects.
struct ActiveForbidden {
  std::string instance;
  MessagePattern pattern;
};

struct HistoryEntry {
  std::uint64_t step_index = 0;
  Event event;
  ObjectSnapshot snapshot_after;
  std::vector<InstanceTransition> transitions;
  std::vector<FiredAnnotation> fired_annotations;
  std::vector<ActiveForbidden> forbidden_before;
};

enum class ViolationReason { strict, forbidden };
std::string_view to_string(ViolationReason r);

struct ExecutedEvent {
  Event event;
  std::vector<InstanceTransition> transitions;
};
struct Quiescent {};
struct Violation {
  std::string instance;
  ViolationReason reason = ViolationReason::forbidden;
  Event event;
  // True when no event could be chosen because a requested one is blocked;
  // false when an executed event broke the instance.
  bool deadlock = false;
};

using StepResult = std::variant<ExecutedEvent, Quiescent, Violation>;

struct RunResult {
  std::vector<Event> events;
  std::optional<Violation> violation;
};

struct PendingRequest {
  std::string instance;
  std::string scenario;
  Event event;
  Urgency urgency = Urgency::requested;
};

class SpecRejected : public Error {
 public:
  explicit SpecRejected(std::vector<Diagnostic> diagnostics);
  const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }

 private:
  std::vector<Diagnostic> diagnostics_;
};

// Executes a scenario specification against an object system. Single writer;
// copies (see fork) are fully independent.
class Engine {
 public:
  // Throws SpecRejected when validation reports errors, EngineError when the
  // world is inconsistent or a static binding cannot be resolved.
  Engine(ScenarioSpec spec, ObjectSystem world);

  StepResult inject_environment_event(Event event);
  StepResult step_system();
  RunResult run_to_quiescence(std::size_t max_steps = 10000);

  // Candidate system events step_system would choose from, best first.
  std::vector<Event> executable_events() const;
  // Requested/committed system events currently waiting, blocked or not.
  std::vector<PendingRequest> pending_requests() const;

  struct Blocking {
    std::string instance;
    ViolationReason reason;
  };
  // Every active instance that would forbid `e` or be strictly violated by it.
  std::vector<Blocking> blockers_of(const Event& e) const;

  Engine fork() const { return *this; }

  const ScenarioSpec& spec() const { return *spec_; }
  std::shared_ptr<const ScenarioSpec> spec_ptr() const { return spec_; }
  const ObjectSchema& schema() const { return *world_.schema; }
  const ObjectSystem& world() const { return world_; }
  const std::vector<HistoryEntry>& history() const { return history_; }
  const std::vector<ScenarioInstance>& instances() const { return instances_; }
  const ScenarioInstance* instance(std::string_view id) const;
  // State 0 is the initial world; state k follows history entry k.
  const ObjectSnapshot& snapshot_at(std::uint64_t state) const;
  std::uint64_t current_state() const { return history_.size(); }

  // Swaps in a new specification between steps. Active instances keep
  // running when their scenario survives with the same step structure;
  // others are dropped as interrupted. Throws SpecRejected.
  void replace_spec(ScenarioSpec spec);

  // Digest of world plus active instance configuration (not the history).
  std::string state_digest() const;

 private:
  struct Candidate {
    Event event;
    Urgency urgency;
    std::string instance;
    std::size_t order;
  };
  struct Blocker {
    std::string instance;
    ViolationReason reason;
  };

  std::vector<Candidate> candidates() const;
  std::optional<Blocker> blocked_by(const Event& e) const;
  StepResult execute(Event e);
  void apply_effects(const Event& e);
  void normalize(ScenarioInstance& inst, std::vector<InstanceTransition>& out);
  bool try_activate(std::size_t scenario_index, const Event& e, ScenarioInstance& out) const;
  void bind_static_roles(const Scenario& s, std::map<std::string, ObjectId>& bindings) const;
  const MessageStep* cut_message(const ScenarioInstance& inst) const;
  bool step_unifies(const MessageStep& m, const ScenarioInstance& inst, const Event& e) const;
  bool constraint_matches(const ScenarioInstance& inst, ConstraintKind kind, const Event& e) const;
  bool unifies_other_message(const ScenarioInstance& inst, const Event& e) const;
  std::vector<const Constraint*> constraints_in_scope(const ScenarioInstance& inst) const;
  Event instantiate(const MessageStep& m, const ScenarioInstance& inst) const;
  void check_event_objects(const Event& e) const;

  std::shared_ptr<const ScenarioSpec> spec_;
  ObjectSystem world_;
  ObjectSnapshot initial_;
  std::vector<HistoryEntry> history_;
  std::vector<ScenarioInstance> instances_;
  std::map<std::string, std::size_t, std::less<>> instance_index_;
  std::uint64_t next_instance_ = 1;
};

// One JSON line per entry: step_index, event, transitions, annotations,
// snapshot digest (in that order).
std::string export_history_line(const HistoryEntry& entry);
std::string export_history(const std::vector<HistoryEntry>& history);

}  // namespace mabex
