#include "mabex/playout.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <tuple>

#include "mabex/wire.hpp"

namespace mabex {

std::string to_string(const Event& e) {
  std::string out = e.sender + " -> " + e.receiver + ".";
  if (e.collection) out += *e.collection + ".";
  out += e.message + "(";
  for (std::size_t i = 0; i < e.args.size(); ++i) {
    if (i) out += ", ";
    if (auto s = std::get_if<std::string>(&e.args[i])) {
      out += wire::Json(*s).dump();
    } else {
      out += value_to_string(e.args[i]);
    }
  }
  return out + ")";
}

Event parse_event(std::string_view text, const ObjectSystem& world) {
  TokenStream ts(tokenize(text));
  std::vector<Expr> args;
  MessagePattern p = parse_message_pattern(ts, false, &args);
  if (!ts.at_end()) ts.fail("unexpected " + describe(ts.peek()), {"end of input"});

  Event e;
  e.sender = p.sender;
  e.receiver = p.receiver;
  e.collection = p.collection;
  e.message = p.message;
  ObjectContext ctx(*world.schema, world.state);
  for (const auto& a : args) e.args.push_back(evaluate(a, ctx));
  const ObjectRecord* sender = world.state.find(e.sender);
  if (!sender) throw EngineError("unknown object '" + e.sender + "'");
  e.origin = sender->realm;
  return e;
}

bool match_pattern(const MessagePattern& p, const Event& e, const ObjectSnapshot& world,
                   std::map<std::string, ObjectId>* bindings) {
  if (p.message != e.message || p.collection != e.collection) return false;
  std::map<std::string, ObjectId> local;
  std::map<std::string, ObjectId>& b = bindings ? *bindings : local;
  auto term = [&](const std::string& t, const ObjectId& actual) {
    if (t == "*") return true;
    if (world.find(t)) return t == actual;
    auto [it, inserted] = b.emplace(t, actual);
    return inserted || it->second == actual;
  };
  std::map<std::string, ObjectId> before = b;
  if (term(p.sender, e.sender) && term(p.receiver, e.receiver)) return true;
  b = std::move(before);
  return false;
}

std::string_view to_string(InstanceStatus s) {
  switch (s) {
    case InstanceStatus::active: return "active";
    case InstanceStatus::completed: return "completed";
    case InstanceStatus::violated: return "violated";
    case InstanceStatus::interrupted: return "interrupted";
  }
  return "?";
}

std::string_view to_string(TransitionKind k) {
  switch (k) {
    case TransitionKind::spawned: return "spawned";
    case TransitionKind::advanced: return "advanced";
    case TransitionKind::terminated: return "terminated";
    case TransitionKind::violated: return "violated";
    case TransitionKind::interrupted: return "interrupted";
  }
  return "?";
}

std::string_view to_string(ViolationReason r) { return r == ViolationReason::strict ? "strict" : "forbidden"; }

SpecRejected::SpecRejected(std::vector<Diagnostic> diagnostics)
    : Error([&] {
        std::string msg = "specification rejected";
        for (const auto& d : diagnostics) msg += "\n" + format_diagnostic(d, "spec");
        return msg;
      }()),
      diagnostics_(std::move(diagnostics)) {}

namespace {

const std::vector<Step>& block_at(const Scenario& s, std::span<const std::size_t> prefix) {
  const std::vector<Step>* block = &s.body;
  for (std::size_t i : prefix) block = &(*block)[i].alternative()->body;
  return *block;
}

void collect_roles(const std::vector<Step>& steps, std::set<std::string>& out) {
  for (const auto& step : steps) {
    if (const MessageStep* m = step.message()) {
      out.insert(m->sender);
      out.insert(m->receiver);
      for (const auto& a : m->args) {
        for (const auto& n : object_names(a)) out.insert(n);
      }
    } else if (const AlternativeStep* alt = step.alternative()) {
      for (const auto& n : object_names(alt->guard)) out.insert(n);
      for (const auto& c : alt->constraints) {
        out.insert(c.pattern.sender);
        out.insert(c.pattern.receiver);
      }
      collect_roles(alt->body, out);
    } else if (const WaitStep* w = step.wait()) {
      for (const auto& n : object_names(w->condition)) out.insert(n);
    }
  }
}

std::set<std::string> referenced_roles(const Scenario& s) {
  std::set<std::string> out;
  collect_roles(s.body, out);
  for (const auto& c : s.constraints) {
    out.insert(c.pattern.sender);
    out.insert(c.pattern.receiver);
  }
  for (const auto& b : s.bindings) {
    for (const auto& n : object_names(b.value)) out.insert(n);
  }
  return out;
}

std::vector<ObjectId> binding_ids(const ScenarioInstance& inst) {
  std::vector<ObjectId> ids;
  for (const auto& [role, id] : inst.bindings) ids.push_back(id);
  return ids;
}

MessagePattern ground(const MessagePattern& p, const std::map<std::string, ObjectId>& b) {
  MessagePattern g = p;
  if (auto it = b.find(p.sender); it != b.end()) g.sender = it->second;
  if (auto it = b.find(p.receiver); it != b.end()) g.receiver = it->second;
  return g;
}

bool grounded_matches(const MessagePattern& g, const Event& e) {
  return g.message == e.message && g.collection == e.collection && (g.sender == "*" || g.sender == e.sender) &&
         (g.receiver == "*" || g.receiver == e.receiver);
}

void check_schema(const ObjectSystem& world) {
  if (!world.schema) throw EngineError("object system has no schema");
  world.check_integrity();
}

}  // namespace

Engine::Engine(ScenarioSpec spec, ObjectSystem world) : world_(std::move(world)) {
  check_schema(world_);
  auto diags = validate(spec, validation_schema(world_));
  diags.erase(std::remove_if(diags.begin(), diags.end(),
                             [](const Diagnostic& d) { return d.severity != Severity::error; }),
              diags.end());
  if (!diags.empty()) throw SpecRejected(std::move(diags));
  spec_ = std::make_shared<const ScenarioSpec>(std::move(spec));
  initial_ = world_.state;

  // Bindings rooted only in static objects must resolve now.
  for (const auto& s : spec_->scenarios) {
    std::map<std::string, ObjectId> statics;
    bind_static_roles(s, statics);
    for (const auto& b : s.bindings) {
      bool is_static = true;
      for (const auto& n : object_names(b.value)) {
        if (!statics.count(n)) is_static = false;
      }
      if (!is_static) continue;
      try {
        ObjectContext ctx(schema(), world_.state, &statics);
        Value v = evaluate(b.value, ctx);
        auto ref = std::get_if<ObjectRef>(&v);
        if (!ref || !world_.state.find(ref->id)) throw EvalError("not an object");
        statics[b.role] = ref->id;
      } catch (const EvalError& e) {
        throw EngineError("scenario '" + s.name + "': cannot bind role '" + b.role + "' to " + to_string(b.value) +
                          ": " + e.what());
      }
    }
  }
}

const ScenarioInstance* Engine::instance(std::string_view id) const {
  auto it = instance_index_.find(id);
  return it == instance_index_.end() ? nullptr : &instances_[it->second];
}

const ObjectSnapshot& Engine::snapshot_at(std::uint64_t state) const {
  if (state == 0) return initial_;
  if (state > history_.size()) throw EngineError("no state " + std::to_string(state));
  return history_[state - 1].snapshot_after;
}

void Engine::bind_static_roles(const Scenario& s, std::map<std::string, ObjectId>& bindings) const {
  auto activation = activation_roles(s);
  std::set<std::string> dynamic(activation.begin(), activation.end());
  for (const auto& role : referenced_roles(s)) {
    if (dynamic.count(role) || bindings.count(role)) continue;
    if (world_.state.find(role)) bindings[role] = role;
  }
}

const MessageStep* Engine::cut_message(const ScenarioInstance& inst) const {
  if (inst.status != InstanceStatus::active) return nullptr;
  const Step* step = step_at(spec_->scenarios[inst.scenario], inst.cut);
  return step ? step->message() : nullptr;
}

bool Engine::step_unifies(const MessageStep& m, const ScenarioInstance& inst, const Event& e) const {
  if (m.message != e.message || m.collection != e.collection) return false;
  auto s = inst.bindings.find(m.sender);
  auto r = inst.bindings.find(m.receiver);
  if (s == inst.bindings.end() || r == inst.bindings.end()) return false;
  if (s->second != e.sender || r->second != e.receiver) return false;
  if (m.args.size() != e.args.size()) return false;
  ObjectContext ctx(schema(), world_.state, &inst.bindings);
  for (std::size_t i = 0; i < m.args.size(); ++i) {
    if (evaluate(m.args[i], ctx) != e.args[i]) return false;
  }
  return true;
}

std::vector<const Constraint*> Engine::constraints_in_scope(const ScenarioInstance& inst) const {
  std::vector<const Constraint*> out;
  if (inst.status != InstanceStatus::active) return out;
  const Scenario& s = spec_->scenarios[inst.scenario];
  for (const auto& c : s.constraints) out.push_back(&c);
  const std::vector<Step>* block = &s.body;
  for (std::size_t depth = 0; depth + 1 < inst.cut.size(); ++depth) {
    const AlternativeStep* alt = (*block)[inst.cut[depth]].alternative();
    for (const auto& c : alt->constraints) out.push_back(&c);
    block = &alt->body;
  }
  return out;
}

bool Engine::constraint_matches(const ScenarioInstance& inst, ConstraintKind kind, const Event& e) const {
  for (const Constraint* c : constraints_in_scope(inst)) {
    if (c->kind == kind && grounded_matches(ground(c->pattern, inst.bindings), e)) return true;
  }
  return false;
}

bool Engine::unifies_other_message(const ScenarioInstance& inst, const Event& e) const {
  for (const auto& occ : message_steps(spec_->scenarios[inst.scenario])) {
    if (occ.path == inst.cut) continue;
    if (step_unifies(*occ.step, inst, e)) return true;
  }
  return false;
}

Event Engine::instantiate(const MessageStep& m, const ScenarioInstance& inst) const {
  Event e;
  e.sender = inst.bindings.at(m.sender);
  e.receiver = inst.bindings.at(m.receiver);
  e.collection = m.collection;
  e.message = m.message;
  ObjectContext ctx(schema(), world_.state, &inst.bindings);
  for (const auto& a : m.args) e.args.push_back(evaluate(a, ctx));
  e.origin = world_.state.find(e.sender)->realm;
  return e;
}

std::vector<PendingRequest> Engine::pending_requests() const {
  std::vector<PendingRequest> out;
  for (const auto& inst : instances_) {
    const MessageStep* m = cut_message(inst);
    if (!m || m->urgency == Urgency::none) continue;
    Event e = instantiate(*m, inst);
    if (e.origin != Realm::system) continue;
    out.push_back({inst.id, inst.scenario_name, std::move(e), m->urgency});
  }
  return out;
}

std::vector<Engine::Candidate> Engine::candidates() const {
  using Key = std::tuple<int, std::size_t, StepPath, std::vector<ObjectId>, std::size_t>;
  std::vector<std::pair<Key, Candidate>> keyed;
  for (std::size_t i = 0; i < instances_.size(); ++i) {
    const auto& inst = instances_[i];
    const MessageStep* m = cut_message(inst);
    if (!m || m->urgency == Urgency::none) continue;
    Event e = instantiate(*m, inst);
    if (e.origin != Realm::system) continue;
    int tier = m->urgency == Urgency::committed ? 1 : 2;
    keyed.push_back({Key{tier, inst.scenario, inst.cut, binding_ids(inst), i}, Candidate{e, m->urgency, inst.id, i}});
  }
  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Candidate> out;
  for (auto& [key, c] : keyed) {
    bool dup = std::any_of(out.begin(), out.end(), [&](const Candidate& o) { return o.event.same_message(c.event); });
    if (!dup) out.push_back(std::move(c));
  }
  return out;
}

std::optional<Engine::Blocker> Engine::blocked_by(const Event& e) const {
  for (const auto& inst : instances_) {
    if (inst.status != InstanceStatus::active) continue;
    const MessageStep* at = cut_message(inst);
    if (at && step_unifies(*at, inst, e)) continue;
    if (constraint_matches(inst, ConstraintKind::forbidden, e)) return Blocker{inst.id, ViolationReason::forbidden};
    if (at && at->strict && unifies_other_message(inst, e)) return Blocker{inst.id, ViolationReason::strict};
  }
  return std::nullopt;
}

std::vector<Engine::Blocking> Engine::blockers_of(const Event& e) const {
  std::vector<Blocking> out;
  for (const auto& inst : instances_) {
    if (inst.status != InstanceStatus::active) continue;
    const MessageStep* at = cut_message(inst);
    if (at && step_unifies(*at, inst, e)) continue;
    if (constraint_matches(inst, ConstraintKind::forbidden, e)) {
      out.push_back({inst.id, ViolationReason::forbidden});
    } else if (at && at->strict && unifies_other_message(inst, e)) {
      out.push_back({inst.id, ViolationReason::strict});
    }
  }
  return out;
}

std::vector<Event> Engine::executable_events() const {
  std::vector<Event> out;
  for (const auto& c : candidates()) {
    if (!blocked_by(c.event)) out.push_back(c.event);
  }
  return out;
}

void Engine::check_event_objects(const Event& e) const {
  const ObjectRecord* sender = world_.state.find(e.sender);
  if (!sender) throw EngineError("unknown object '" + e.sender + "'");
  const ObjectRecord* receiver = world_.state.find(e.receiver);
  if (!receiver) throw EngineError("unknown object '" + e.receiver + "'");
  if (e.collection) {
    if (!schema().find_collection(receiver->class_name, *e.collection)) {
      throw EngineError("object '" + e.receiver + "' has no collection '" + *e.collection + "'");
    }
    if (e.message != "add" && e.message != "remove" && e.message != "clear") {
      throw EngineError("unknown collection operation '" + e.message + "'");
    }
    if (e.message != "clear" && (e.args.size() != 1 || !std::holds_alternative<ObjectRef>(e.args[0]))) {
      throw EngineError("collection operation '" + e.message + "' takes one object argument");
    }
  }
  for (const auto& a : e.args) {
    if (auto ref = std::get_if<ObjectRef>(&a); ref && !world_.state.find(ref->id)) {
      throw EngineError("unknown object '" + ref->id + "'");
    }
  }
}

void Engine::apply_effects(const Event& e) {
  if (e.collection) {
    auto& items = world_.state.objects.at(e.receiver).collections[*e.collection];
    if (e.message == "clear") {
      items.clear();
    } else {
      const ObjectId& id = std::get<ObjectRef>(e.args[0]).id;
      auto it = std::find(items.begin(), items.end(), id);
      if (e.message == "add" && it == items.end()) items.push_back(id);
      if (e.message == "remove" && it != items.end()) items.erase(it);
    }
    return;
  }
  for (const auto& fx : schema().effects()) {
    if (fx.message != e.message) continue;
    const ObjectId& target = fx.target == AttributeEffect::Target::sender ? e.sender : e.receiver;
    world_.state.objects.at(target).attributes[fx.attribute] = fx.value;
  }
}

void Engine::normalize(ScenarioInstance& inst, std::vector<InstanceTransition>& out) {
  if (inst.status != InstanceStatus::active) return;
  const Scenario& s = spec_->scenarios[inst.scenario];
  ObjectContext ctx(schema(), world_.state, &inst.bindings);
  auto check = [&](const Expr& cond, std::string_view what) {
    try {
      return evaluate_condition(cond, ctx);
    } catch (const EvalError& e) {
      throw EngineError("scenario '" + s.name + "' " + std::string(what) + " [" + to_string(cond) + "]: " + e.what());
    }
  };
  for (;;) {
    const auto& block = block_at(s, std::span(inst.cut).first(inst.cut.size() - 1));
    std::size_t idx = inst.cut.back();
    if (idx >= block.size()) {
      if (inst.cut.size() == 1) {
        inst.status = InstanceStatus::completed;
        out.push_back({inst.id, TransitionKind::terminated, s.name, ""});
        return;
      }
      inst.cut.pop_back();
      ++inst.cut.back();
      continue;
    }
    const Step& step = block[idx];
    if (step.message()) return;
    if (const AlternativeStep* alt = step.alternative()) {
      if (check(alt->guard, "guard")) {
        inst.cut.push_back(0);
      } else {
        ++inst.cut.back();
      }
      continue;
    }
    if (!check(step.wait()->condition, "wait condition")) return;
    ++inst.cut.back();
  }
}

bool Engine::try_activate(std::size_t index, const Event& e, ScenarioInstance& out) const {
  const Scenario& s = spec_->scenarios[index];
  if (s.body.empty()) return false;
  const MessageStep* first = s.body.front().message();
  if (!first || first->message != e.message || first->collection != e.collection) return false;
  std::map<std::string, ObjectId> b;
  b[first->sender] = e.sender;
  if (auto [it, inserted] = b.emplace(first->receiver, e.receiver); !inserted && it->second != e.receiver) {
    return false;
  }
  bind_static_roles(s, b);
  for (const auto& binding : s.bindings) {
    ObjectContext ctx(schema(), world_.state, &b);
    Value v;
    try {
      v = evaluate(binding.value, ctx);
    } catch (const EvalError& err) {
      throw EngineError("scenario '" + s.name + "': cannot bind role '" + binding.role + "': " + err.what());
    }
    auto ref = std::get_if<ObjectRef>(&v);
    if (!ref || !world_.state.find(ref->id)) {
      throw EngineError("scenario '" + s.name + "': role '" + binding.role + "' does not denote an object");
    }
    b[binding.role] = ref->id;
  }
  if (!first->args.empty()) {
    if (first->args.size() != e.args.size()) return false;
    ObjectContext ctx(schema(), world_.state, &b);
    for (std::size_t i = 0; i < first->args.size(); ++i) {
      if (evaluate(first->args[i], ctx) != e.args[i]) return false;
    }
  }
  out.scenario = index;
  out.scenario_name = s.name;
  out.bindings = std::move(b);
  out.cut = {1};
  out.status = InstanceStatus::active;
  return true;
}

StepResult Engine::execute(Event e) {
  e.step_index = history_.size() + 1;
  HistoryEntry entry;
  entry.step_index = e.step_index;
  entry.event = e;
  for (const auto& inst : instances_) {
    for (const Constraint* c : constraints_in_scope(inst)) {
      if (c->kind == ConstraintKind::forbidden) entry.forbidden_before.push_back({inst.id, ground(c->pattern, inst.bindings)});
    }
  }

  // Activation is decided on the pre-event state so bindings see the world
  // the triggering message was sent in.
  std::vector<ScenarioInstance> spawned;
  for (std::size_t i = 0; i < spec_->scenarios.size(); ++i) {
    ScenarioInstance inst;
    if (try_activate(i, e, inst)) spawned.push_back(std::move(inst));
  }

  // Matching of enabled steps also uses the pre-event state (argument
  // expressions read the world as it was when the message was chosen).
  struct Reaction {
    enum Kind { none, advance, interrupt, violate } kind = none;
    ViolationReason reason = ViolationReason::forbidden;
  };
  std::vector<Reaction> reactions(instances_.size());
  for (std::size_t i = 0; i < instances_.size(); ++i) {
    const auto& inst = instances_[i];
    if (inst.status != InstanceStatus::active) continue;
    const MessageStep* at = cut_message(inst);
    if (at && step_unifies(*at, inst, e)) {
      reactions[i].kind = Reaction::advance;
    } else if (constraint_matches(inst, ConstraintKind::interrupt, e)) {
      reactions[i].kind = Reaction::interrupt;
    } else if (constraint_matches(inst, ConstraintKind::forbidden, e)) {
      reactions[i] = {Reaction::violate, ViolationReason::forbidden};
    } else if (at && at->strict && unifies_other_message(inst, e)) {
      reactions[i] = {Reaction::violate, ViolationReason::strict};
    }
  }

  apply_effects(e);

  std::optional<Violation> violation;
  auto fire = [&](const ScenarioInstance& inst, const std::optional<std::string>& text) {
    if (text) entry.fired_annotations.push_back({inst.scenario_name, step_id(inst.cut), inst.id, *text});
  };
  for (std::size_t i = 0; i < instances_.size(); ++i) {
    auto& inst = instances_[i];
    const Scenario& s = spec_->scenarios[inst.scenario];
    switch (reactions[i].kind) {
      case Reaction::none: break;
      case Reaction::advance: {
        const MessageStep* at = cut_message(inst);
        entry.transitions.push_back({inst.id, TransitionKind::advanced, s.name, step_id(inst.cut)});
        fire(inst, at->annotation);
        ++inst.cut.back();
        normalize(inst, entry.transitions);
        break;
      }
      case Reaction::interrupt:
        inst.status = InstanceStatus::interrupted;
        entry.transitions.push_back({inst.id, TransitionKind::interrupted, s.name, ""});
        break;
      case Reaction::violate:
        inst.status = InstanceStatus::violated;
        entry.transitions.push_back({inst.id, TransitionKind::violated, s.name, ""});
        if (!violation) violation = Violation{inst.id, reactions[i].reason, e, false};
        break;
    }
  }

  for (auto& inst : spawned) {
    inst.id = "i" + std::to_string(next_instance_++);
    inst.spawned_at = e.step_index;
    const Scenario& s = spec_->scenarios[inst.scenario];
    entry.transitions.push_back({inst.id, TransitionKind::spawned, s.name, "0"});
    if (auto a = s.body.front().annotation()) entry.fired_annotations.push_back({s.name, "0", inst.id, *a});
    normalize(inst, entry.transitions);
    instance_index_[inst.id] = instances_.size();
    instances_.push_back(std::move(inst));
  }

  // Wait conditions may have been released by this event's effects.
  for (auto& inst : instances_) normalize(inst, entry.transitions);

  entry.snapshot_after = world_.state;
  std::vector<InstanceTransition> transitions = entry.transitions;
  history_.push_back(std::move(entry));
  if (violation) return *violation;
  return ExecutedEvent{std::move(e), std::move(transitions)};
}

StepResult Engine::inject_environment_event(Event event) {
  check_event_objects(event);
  const ObjectRecord* sender = world_.state.find(event.sender);
  if (event.origin != Realm::environment || sender->realm != Realm::environment) {
    throw EngineError("'" + to_string(event) + "' is not an environment event");
  }
  return execute(std::move(event));
}

StepResult Engine::step_system() {
  auto cands = candidates();
  for (const auto& c : cands) {
    if (!blocked_by(c.event)) return execute(c.event);
  }
  for (const auto& c : cands) {
    if (auto b = blocked_by(c.event)) return Violation{c.instance, b->reason, c.event, true};
  }
  return Quiescent{};
}

RunResult Engine::run_to_quiescence(std::size_t max_steps) {
  RunResult out;
  for (std::size_t i = 0; i < max_steps; ++i) {
    StepResult r = step_system();
    if (auto ex = std::get_if<ExecutedEvent>(&r)) {
      out.events.push_back(ex->event);
      continue;
    }
    if (auto v = std::get_if<Violation>(&r)) out.violation = *v;
    return out;
  }
  throw EngineError("no quiescence after " + std::to_string(max_steps) + " system steps");
}

void Engine::replace_spec(ScenarioSpec spec) {
  auto diags = validate(spec, validation_schema(world_));
  diags.erase(std::remove_if(diags.begin(), diags.end(),
                             [](const Diagnostic& d) { return d.severity != Severity::error; }),
              diags.end());
  if (!diags.empty()) throw SpecRejected(std::move(diags));
  auto next = std::make_shared<const ScenarioSpec>(std::move(spec));
  for (auto& inst : instances_) {
    if (inst.status != InstanceStatus::active) continue;
    auto idx = next->index_of(inst.scenario_name);
    if (idx && same_shape(spec_->scenarios[inst.scenario], next->scenarios[*idx])) {
      inst.scenario = *idx;
    } else {
      inst.status = InstanceStatus::interrupted;
    }
  }
  spec_ = std::move(next);
}

std::string Engine::state_digest() const {
  std::string text = canonical_text(world_.state);
  for (const auto& inst : instances_) {
    if (inst.status != InstanceStatus::active) continue;
    text += "|" + inst.scenario_name + "@" + step_id(inst.cut);
    for (const auto& [role, id] : inst.bindings) text += "," + role + "=" + id;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
  return buf;
}

std::string export_history_line(const HistoryEntry& entry) {
  wire::Json transitions = wire::Json::array();
  for (const auto& t : entry.transitions) {
    transitions.push_back(
        {{"instance", t.instance}, {"kind", std::string(to_string(t.kind))}, {"scenario", t.scenario}, {"step", t.step}});
  }
  wire::Json annotations = wire::Json::array();
  for (const auto& a : entry.fired_annotations) {
    annotations.push_back({{"scenario", a.scenario}, {"step", a.step}, {"instance", a.instance}, {"text", a.text}});
  }
  wire::Json j{{"step_index", entry.step_index},
               {"event", wire::to_json(entry.event)},
               {"transitions", transitions},
               {"annotations", annotations},
               {"digest", snapshot_digest(entry.snapshot_after)}};
  return j.dump();
}

std::string export_history(const std::vector<HistoryEntry>& history) {
  std::string out;
  for (const auto& e : history) out += export_history_line(e) + "\n";
  return out;
}

}  // namespace mabex
