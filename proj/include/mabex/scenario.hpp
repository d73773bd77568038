#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mabex/expr.hpp"
#include "mabex/object_system.hpp"

namespace mabex {

enum class ScenarioKind { guarantee, assumption };
enum class Urgency { none, requested, committed };
enum class ConstraintKind { forbidden, interrupt };

std::string_view to_string(ScenarioKind k);
std::string_view to_string(Urgency u);
std::string_view to_string(ConstraintKind k);

// `sender -> receiver[.collection].message(...)` with arguments ignored.
// Terms are role names inside scenarios; elsewhere they are object ids,
// rule variables, or `*`.
struct MessagePattern {
  std::string sender;
  std::string receiver;
  std::optional<std::string> collection;
  std::string message;

  friend bool operator==(const MessagePattern&, const MessagePattern&) = default;
};

std::string to_string(const MessagePattern& p);

struct Constraint {
  ConstraintKind kind = ConstraintKind::forbidden;
  MessagePattern pattern;
  SourceLoc loc;

  friend bool operator==(const Constraint& a, const Constraint& b) {
    return a.kind == b.kind && a.pattern == b.pattern;
  }
};

struct MessageStep {
  bool strict = false;
  Urgency urgency = Urgency::none;
  std::string sender;
  std::string receiver;
  // Set for side-effect messages addressed to a collection (`oc.list.add(x)`).
  std::optional<std::string> collection;
  std::string message;
  std::vector<Expr> args;
  std::optional<std::string> annotation;
  SourceLoc loc;

  MessagePattern pattern() const { return {sender, receiver, collection, message}; }

  friend bool operator==(const MessageStep& a, const MessageStep& b) {
    return a.strict == b.strict && a.urgency == b.urgency && a.sender == b.sender &&
           a.receiver == b.receiver && a.collection == b.collection && a.message == b.message &&
           a.args == b.args && a.annotation == b.annotation;
  }
};

struct Step;

struct AlternativeStep {
  Expr guard;
  std::vector<Step> body;
  std::vector<Constraint> constraints;
  std::optional<std::string> annotation;
  SourceLoc loc;

  friend bool operator==(const AlternativeStep& a, const AlternativeStep& b);
};

// Blocks the cut until the condition holds in the current snapshot.
struct WaitStep {
  Expr condition;
  std::optional<std::string> annotation;
  SourceLoc loc;

  friend bool operator==(const WaitStep& a, const WaitStep& b) {
    return a.condition == b.condition && a.annotation == b.annotation;
  }
};

struct Step {
  std::variant<MessageStep, AlternativeStep, WaitStep> kind;

  const MessageStep* message() const { return std::get_if<MessageStep>(&kind); }
  const AlternativeStep* alternative() const { return std::get_if<AlternativeStep>(&kind); }
  const WaitStep* wait() const { return std::get_if<WaitStep>(&kind); }
  const std::optional<std::string>& annotation() const;
  SourceLoc loc() const;

  friend bool operator==(const Step&, const Step&) = default;
};

inline bool operator==(const AlternativeStep& a, const AlternativeStep& b) {
  return a.guard == b.guard && a.body == b.body && a.constraints == b.constraints &&
         a.annotation == b.annotation;
}

struct Binding {
  std::string role;
  Expr value;  // attribute path such as `cp.obstacleCtrl`
  SourceLoc loc;

  friend bool operator==(const Binding& a, const Binding& b) {
    return a.role == b.role && a.value == b.value;
  }
};

struct Scenario {
  ScenarioKind kind = ScenarioKind::guarantee;
  std::string name;
  std::vector<Binding> bindings;
  std::vector<Step> body;
  std::vector<Constraint> constraints;
  SourceLoc loc;

  friend bool operator==(const Scenario& a, const Scenario& b) {
    return a.kind == b.kind && a.name == b.name && a.bindings == b.bindings && a.body == b.body &&
           a.constraints == b.constraints;
  }
};

struct ScenarioSpec {
  std::vector<Scenario> scenarios;

  const Scenario* find(std::string_view name) const;
  std::optional<std::size_t> index_of(std::string_view name) const;

  friend bool operator==(const ScenarioSpec&, const ScenarioSpec&) = default;
};

// Index path into nested step blocks; `{1, 0}` is the first step inside the
// alternative at body position 1.
using StepPath = std::vector<std::size_t>;

std::string step_id(std::span<const std::size_t> path);
std::optional<StepPath> parse_step_id(std::string_view id);
const Step* step_at(const Scenario& s, std::span<const std::size_t> path);

struct MessageOccurrence {
  StepPath path;
  const MessageStep* step;
};
// Every message step of the scenario in document order.
std::vector<MessageOccurrence> message_steps(const Scenario& s);

// Roles bound at activation: first-message sender/receiver plus bindings.
std::vector<std::string> activation_roles(const Scenario& s);

ScenarioSpec parse_specification(std::string_view text);
// Parses one message pattern; `allow_wildcards` admits `*` for sender/receiver.
MessagePattern parse_message_pattern(TokenStream& ts, bool allow_wildcards,
                                     std::vector<Expr>* args = nullptr);
MessagePattern parse_message_pattern(std::string_view text, bool allow_wildcards = true);

std::string pretty_print(const ScenarioSpec& spec);

// Concatenation; throws Error on duplicate scenario names.
ScenarioSpec merge(const ScenarioSpec& a, const ScenarioSpec& b);
ScenarioSpec strip_annotations(const ScenarioSpec& spec);
// Same step structure ignoring annotations.
bool same_shape(const Scenario& a, const Scenario& b);

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

enum class Severity { error, warning };

struct Diagnostic {
  SourceLoc loc;
  Severity severity = Severity::error;
  std::string message;
};

// `file:line:col: severity: message`
std::string format_diagnostic(const Diagnostic& d, std::string_view file);
Diagnostic to_diagnostic(const ParseError& e);

// Static objects: world object ids usable as roles without binding.
struct ValidationSchema {
  const ObjectSchema* schema = nullptr;
  std::map<std::string, std::string> static_objects;  // id -> class
};

ValidationSchema validation_schema(const ObjectSystem& world);

std::vector<Diagnostic> validate(const ScenarioSpec& spec, const ValidationSchema& schema);

}  // namespace mabex
