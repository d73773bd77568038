#include "mabex/mabex_loop.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <fstream>
#include <set>
#include <unordered_set>

namespace mabex {

namespace {
template <class... F>
struct overloaded : F... {
  using F::operator()...;
};
template <class... F>
overloaded(F...) -> overloaded<F...>;

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::string strip_period(std::string s) {
  while (!s.empty() && (s.back() == '.' || s.back() == ' ')) s.pop_back();
  return s;
}

std::string with_period(std::string s) {
  if (s.empty() || s.back() != '.') s += '.';
  return s;
}
}  // namespace

// ---------------------------------------------------------------------------
// Monitor
// ---------------------------------------------------------------------------

std::string_view to_string(RecordKind k) {
  switch (k) {
    case RecordKind::event: return "event";
    case RecordKind::snapshot: return "snapshot";
    case RecordKind::user_query: return "user_query";
    case RecordKind::recipient_reaction: return "recipient_reaction";
  }
  return "?";
}

const MonitorRecord& MonitorStream::ingest(MonitorRecord record) {
  record.timestamp = records_.size() + 1;
  records_.push_back(std::move(record));
  return records_.back();
}

MonitorRecord event_record(const HistoryEntry& entry) {
  MonitorRecord r;
  r.kind = RecordKind::event;
  r.history_step = entry.step_index;
  r.event = entry.event;
  r.snapshot = entry.snapshot_after;
  return r;
}

MonitorRecord query_record(std::string text, std::string recipient) {
  MonitorRecord r;
  r.kind = RecordKind::user_query;
  r.text = std::move(text);
  r.recipient = std::move(recipient);
  return r;
}

MonitorRecord reaction_record(std::string recipient, bool helpful) {
  MonitorRecord r;
  r.kind = RecordKind::recipient_reaction;
  r.recipient = std::move(recipient);
  r.helpful = helpful;
  return r;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

std::string_view to_string(Audience a) {
  switch (a) {
    case Audience::end_user: return "end_user";
    case Audience::engineer: return "engineer";
    case Audience::machine: return "machine";
  }
  return "?";
}

Audience parse_audience(std::string_view text) {
  if (text == "end_user") return Audience::end_user;
  if (text == "engineer") return Audience::engineer;
  if (text == "machine") return Audience::machine;
  throw Error("unknown audience '" + std::string(text) + "' (expected end_user, engineer or machine)");
}

RecipientModel default_recipient(Audience a) {
  switch (a) {
    case Audience::end_user: return {"driver", a, Format::textual, 1};
    case Audience::engineer: return {"engineer", a, Format::textual, 2};
    case Audience::machine: return {"machine", a, Format::structured, 2};
  }
  return {};
}

const QueryMapping* LoopConfig::find_query(std::string_view text) const {
  std::string t = trim(text);
  for (const auto& q : queries) {
    if (q.text == t) return &q;
  }
  return nullptr;
}

std::optional<std::string> LoopConfig::label_for(const Expr& condition) const {
  for (const auto& q : queries) {
    if (!q.condition.empty() && q.condition == condition) return q.text;
  }
  return std::nullopt;
}

LoopConfig parse_config(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  if (j.value("schema", "") != "mabex-config/1") throw Error("config: expected schema \"mabex-config/1\"");
  LoopConfig cfg;
  try {
    for (const auto& r : j.value("rules", nlohmann::json::array())) {
      TriggerRule rule;
      rule.id = r.at("id").get<std::string>();
      rule.event_pattern = parse_message_pattern(r.at("event").get<std::string>(), true);
      if (r.contains("when")) rule.state_predicate = parse_expression(r.at("when").get<std::string>());
      rule.behavior_label = r.value("label", rule.id);
      cfg.rules.push_back(std::move(rule));
    }
    for (const auto& q : j.value("queries", nlohmann::json::array())) {
      QueryMapping m;
      m.text = trim(q.at("text").get<std::string>());
      if (q.contains("condition")) m.condition = parse_expression(q.at("condition").get<std::string>());
      if (q.contains("future")) m.future = parse_message_pattern(q.at("future").get<std::string>(), true);
      m.horizon = q.value("horizon", std::size_t{3});
      if (m.condition.empty() == !m.future.has_value()) {
        throw Error("query '" + m.text + "' needs exactly one of condition / future");
      }
      cfg.queries.push_back(std::move(m));
    }
    for (const auto& r : j.value("recipients", nlohmann::json::array())) {
      RecipientModel m;
      m.id = r.at("id").get<std::string>();
      m.audience = parse_audience(r.value("audience", "end_user"));
      std::string fmt = r.value("format", m.audience == Audience::machine ? "structured" : "textual");
      if (fmt != "textual" && fmt != "structured") throw Error("unknown format '" + fmt + "'");
      m.format = fmt == "textual" ? Format::textual : Format::structured;
      m.verbosity_depth = r.value("verbosity_depth", std::size_t{1});
      if (m.verbosity_depth < 1) throw Error("recipient '" + m.id + "': verbosity_depth must be at least 1");
      cfg.recipients.push_back(std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  } catch (const ParseError& e) {
    throw Error(std::string("config: ") + e.what());
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Analyze
// ---------------------------------------------------------------------------

std::string_view to_string(NeedKind k) { return k == NeedKind::system_triggered ? "system_triggered" : "user_query"; }

std::string target_key(const ExplanationNeed& need) {
  return std::visit(overloaded{
                        [&](const EventTarget&) { return "event:" + need.target_text; },
                        [&](const ConditionTarget& c) { return "condition:" + to_string(c.condition); },
                        [&](const FutureTarget& f) { return "future:" + to_string(f.pattern); },
                    },
                    need.target);
}

AnalyzeResult Analyzer::analyze(const MonitorStream& stream, const LoopConfig& config, const ObjectSchema& schema) {
  AnalyzeResult out;
  const auto& records = stream.records();
  for (; consumed_ < records.size(); ++consumed_) {
    const MonitorRecord& r = records[consumed_];
    if (r.kind == RecordKind::event && r.event && r.snapshot) {
      for (const auto& rule : config.rules) {
        std::map<std::string, ObjectId> bindings;
        if (!match_pattern(rule.event_pattern, *r.event, *r.snapshot, &bindings)) continue;
        bool holds = true;
        if (!rule.state_predicate.empty()) {
          try {
            ObjectContext ctx(schema, *r.snapshot, &bindings);
            holds = evaluate_condition(rule.state_predicate, ctx);
          } catch (const EvalError& e) {
            throw RuleError(rule.id, e.what());
          }
        }
        if (!holds) continue;
        ExplanationNeed need;
        need.kind = NeedKind::system_triggered;
        need.target = EventTarget{r.history_step};
        need.origin_rule = rule.id;
        need.behavior_label = rule.behavior_label;
        need.target_text = to_string(*r.event);
        out.needs.push_back(std::move(need));
      }
    } else if (r.kind == RecordKind::user_query) {
      const QueryMapping* q = config.find_query(r.text);
      if (!q) {
        out.unmapped_queries.push_back(r.text);
        continue;
      }
      ExplanationNeed need;
      need.kind = NeedKind::user_query;
      need.recipient = r.recipient;
      need.behavior_label = q->text;
      if (q->future) {
        need.target = FutureTarget{*q->future, q->horizon};
        need.target_text = to_string(*q->future);
      } else {
        need.target = ConditionTarget{q->condition};
        need.target_text = to_string(q->condition);
      }
      out.needs.push_back(std::move(need));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Build
// ---------------------------------------------------------------------------

std::pair<std::string, std::string> split_fragment(std::string_view fragment) {
  std::string f = trim(fragment);
  auto pos = f.find(" because ");
  if (pos == std::string::npos) return {"", f};
  return {trim(f.substr(0, pos)), trim(f.substr(pos + 9))};
}

namespace {

struct StepAnnotation {
  FiredAnnotation fired;
  std::size_t scenario_index;
  std::uint64_t instance_number;
};

std::uint64_t instance_number(const std::string& id) {
  return id.size() > 1 ? std::stoull(id.substr(1)) : 0;
}

// Annotations of the steps an entry consumed, looked up in the current spec
// so that a reloaded specification can explain old history.
std::vector<StepAnnotation> annotations_for(const HistoryEntry& entry, const ScenarioSpec& spec) {
  std::vector<StepAnnotation> out;
  for (const auto& t : entry.transitions) {
    if (t.kind != TransitionKind::advanced && t.kind != TransitionKind::spawned) continue;
    auto idx = spec.index_of(t.scenario);
    auto path = parse_step_id(t.step);
    if (!idx || !path) continue;
    const Step* step = step_at(spec.scenarios[*idx], *path);
    if (!step || !step->annotation()) continue;
    out.push_back({{t.scenario, t.step, t.instance, *step->annotation()}, *idx, instance_number(t.instance)});
  }
  std::stable_sort(out.begin(), out.end(), [](const StepAnnotation& a, const StepAnnotation& b) {
    return std::tie(a.scenario_index, a.instance_number) < std::tie(b.scenario_index, b.instance_number);
  });
  return out;
}

void collect_atoms(const Expr& e, std::vector<Expr>& out) {
  if (auto ds = disjuncts(e); ds.size() > 1) {
    for (const auto& d : ds) collect_atoms(d, out);
  } else if (auto cs = conjuncts(e); cs.size() > 1) {
    for (const auto& c : cs) collect_atoms(c, out);
  } else {
    out.push_back(e);
  }
}

std::vector<FollowUp> follow_ups_for(const std::vector<StepAnnotation>& annotations, const Engine& engine,
                                     const ObjectSnapshot& pre, const LoopConfig* config) {
  std::vector<FollowUp> out;
  std::set<std::string> seen;
  for (const auto& a : annotations) {
    const ScenarioInstance* inst = engine.instance(a.fired.instance);
    auto idx = engine.spec().index_of(a.fired.scenario);
    auto path = parse_step_id(a.fired.step);
    if (!inst || !idx || !path) continue;
    const Scenario& s = engine.spec().scenarios[*idx];
    std::map<std::string, std::string> rename(inst->bindings.begin(), inst->bindings.end());
    for (std::size_t len = 1; len < path->size(); ++len) {
      const Step* step = step_at(s, std::span(*path).first(len));
      const AlternativeStep* alt = step ? step->alternative() : nullptr;
      if (!alt) continue;
      std::vector<Expr> atoms;
      collect_atoms(substitute_names(alt->guard, rename), atoms);
      for (const auto& atom : atoms) {
        std::string text = to_string(atom);
        if (!seen.insert(text).second) continue;
        bool holds = false;
        try {
          holds = evaluate_condition(atom, ObjectContext(engine.schema(), pre));
        } catch (const EvalError&) {
          continue;
        }
        if (!holds) continue;
        FollowUp f;
        auto label = config ? config->label_for(atom) : std::nullopt;
        f.label = label ? *label : "Why does " + text + " hold?";
        f.need.kind = NeedKind::user_query;
        f.need.target = ConditionTarget{atom};
        f.need.behavior_label = f.label;
        f.need.target_text = text;
        out.push_back(std::move(f));
      }
    }
  }
  return out;
}

Cause cause_from(const StepAnnotation& a, std::uint64_t step) {
  auto [subject, reason] = split_fragment(a.fired.text);
  Cause c;
  c.subject_clause = subject;
  c.reason_clause = reason;
  c.provenance.source = Provenance::Source::scenario;
  c.provenance.scenario = a.fired.scenario;
  c.provenance.step = a.fired.step;
  c.provenance.instance = a.fired.instance;
  c.support = {step};
  return c;
}

BuildResult build_event(const ExplanationNeed& need, const EventTarget& t, const BuildModels& m) {
  const Engine& engine = *m.engine;
  if (t.step == 0 || t.step > engine.history().size()) {
    throw Error("no history step " + std::to_string(t.step));
  }
  const HistoryEntry& entry = engine.history()[t.step - 1];
  const ObjectSnapshot& pre = engine.snapshot_at(t.step - 1);
  ExplanationIR ir;
  auto annotations = annotations_for(entry, engine.spec());
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& a : annotations) {
    Cause c = cause_from(a, t.step);
    if (!seen.insert({c.subject_clause, c.reason_clause}).second) continue;
    ir.causes.push_back(std::move(c));
  }
  if (!ir.causes.empty()) {
    ir.follow_up_handles = follow_ups_for(annotations, engine, pre, m.config);
  } else if (m.trees) {
    for (const auto& tree : *m.trees) {
      if (!tree.observes) continue;
      std::map<std::string, ObjectId> bindings;
      if (!match_pattern(*tree.observes, entry.event, pre, &bindings)) continue;
      std::vector<TreeFragment> fragments;
      try {
        fragments = explain_from_tree(tree, ObjectContext(engine.schema(), pre, &bindings), m.tree_depth);
      } catch (const EvalError&) {
        continue;
      }
      for (const auto& f : fragments) {
        Cause c;
        c.subject_clause = tree.root.fragment();
        c.reason_clause = f.text;
        c.provenance.source = Provenance::Source::tree;
        c.provenance.tree = tree.root.id;
        for (const auto& id : f.nodes) {
          if (!c.provenance.node.empty()) c.provenance.node += "+";
          c.provenance.node += id;
        }
        c.support = {t.step};
        ir.causes.push_back(std::move(c));
      }
    }
  }
  if (ir.causes.empty()) {
    return Unexplainable{"no annotation or causality node explains '" + need.target_text + "'", true};
  }
  ir.subject_clause = ir.causes.front().subject_clause;
  return ir;
}

BuildResult build_condition(const ConditionTarget& t, const BuildModels& m) {
  auto flip = trace_condition_flip(*m.engine, t.condition);
  if (std::holds_alternative<NoFlip>(flip)) {
    return Unexplainable{to_string(t.condition) + " has held since the initial state", false};
  }
  const FlipResult& f = std::get<FlipResult>(flip);
  if (f.annotations.empty()) {
    return Unexplainable{"'" + to_string(f.event) + "' made it true but carries no explanation", true};
  }
  ExplanationIR ir;
  ir.context = "it holds since " + to_string(f.event) + " at step " + std::to_string(f.step);
  for (const auto& a : f.annotations) {
    auto [subject, reason] = split_fragment(a.text);
    Cause c;
    c.subject_clause = subject;
    c.reason_clause = reason;
    c.provenance = {Provenance::Source::scenario, a.scenario, a.step, a.instance, "", ""};
    c.support = {f.step};
    ir.causes.push_back(std::move(c));
  }
  ir.subject_clause = ir.causes.front().subject_clause;
  return ir;
}

}  // namespace

std::variant<FlipResult, NoFlip> trace_condition_flip(const Engine& engine, const Expr& condition) {
  auto holds = [&](std::uint64_t state) {
    return evaluate_condition(condition, ObjectContext(engine.schema(), engine.snapshot_at(state)));
  };
  std::uint64_t now = engine.current_state();
  if (!holds(now)) throw ConditionNotHolding(to_string(condition) + " does not hold now");
  bool after = true;
  for (std::uint64_t k = now; k >= 1; --k) {
    bool before = holds(k - 1);
    if (after && !before) {
      const HistoryEntry& entry = engine.history()[k - 1];
      FlipResult r;
      r.step = k;
      r.event = entry.event;
      for (auto& a : annotations_for(entry, engine.spec())) r.annotations.push_back(std::move(a.fired));
      return r;
    }
    after = before;
  }
  return NoFlip{};
}

bool target_executable(const Engine& engine, const MessagePattern& target) {
  for (const auto& e : engine.executable_events()) {
    if (match_pattern(target, e, engine.world().state)) return true;
  }
  return false;
}

LookaheadResult lookahead_query(const Engine& engine, const MessagePattern& target,
                                const std::vector<Event>& alphabet, std::size_t horizon) {
  if (target_executable(engine, target)) return Reachable{0, {}};
  struct Node {
    Engine engine;
    std::vector<Event> witness;
  };
  std::vector<Node> frontier;
  frontier.push_back({engine.fork(), {}});
  std::unordered_set<std::string> visited{engine.state_digest()};
  for (std::size_t depth = 1; depth <= horizon; ++depth) {
    std::vector<Node> next;
    for (const auto& node : frontier) {
      for (const auto& ev : alphabet) {
        Engine copy = node.engine.fork();
        try {
          copy.inject_environment_event(ev);
        } catch (const EngineError&) {
          continue;
        }
        std::vector<Event> witness = node.witness;
        witness.push_back(ev);
        bool reached = target_executable(copy, target);
        while (!reached) {
          StepResult r = copy.step_system();
          if (!std::holds_alternative<ExecutedEvent>(r)) break;
          reached = target_executable(copy, target);
        }
        if (reached) return Reachable{depth, std::move(witness)};
        if (visited.insert(copy.state_digest()).second) next.push_back({std::move(copy), std::move(witness)});
      }
    }
    frontier = std::move(next);
  }
  return Unknown{};
}

BuildResult build_explanation(const ExplanationNeed& need, const BuildModels& models) {
  if (!models.engine) throw Error("no engine to explain");
  return std::visit(overloaded{
                        [&](const EventTarget& t) -> BuildResult { return build_event(need, t, models); },
                        [&](const ConditionTarget& t) -> BuildResult { return build_condition(t, models); },
                        [&](const FutureTarget& t) -> BuildResult {
                          static const std::vector<Event> none;
                          const auto& alphabet = models.alphabet ? *models.alphabet : none;
                          Forecast f;
                          f.target = to_string(t.pattern);
                          f.horizon = t.horizon;
                          auto r = lookahead_query(*models.engine, t.pattern, alphabet, t.horizon);
                          if (auto ok = std::get_if<Reachable>(&r)) {
                            f.steps = ok->steps;
                            f.witness = ok->witness;
                          }
                          return f;
                        },
                    },
                    need.target);
}

WhyNotAnswer explain_why_not(const Engine& engine, const MessagePattern& target) {
  WhyNotAnswer w;
  w.target = to_string(target);
  w.executable = target_executable(engine, target);
  const ScenarioSpec& spec = engine.spec();
  std::set<std::string> seen;
  auto add = [&](Cause c) {
    if (seen.insert(c.provenance.instance + "|" + c.reason_clause).second) w.blockers.push_back(std::move(c));
  };
  auto instance_cause = [&](const ScenarioInstance& inst, std::string fallback) {
    Cause c;
    c.provenance = {Provenance::Source::scenario, inst.scenario_name, step_id(inst.cut), inst.id, "", ""};
    c.support = {engine.current_state()};
    const Step* at = step_at(spec.scenarios[inst.scenario], inst.cut);
    if (at && at->annotation()) {
      auto [subject, reason] = split_fragment(*at->annotation());
      c.subject_clause = subject;
      c.reason_clause = reason;
    } else {
      c.reason_clause = std::move(fallback);
    }
    return c;
  };
  for (const auto& p : engine.pending_requests()) {
    if (!match_pattern(target, p.event, engine.world().state)) continue;
    w.requested = true;
    for (const auto& b : engine.blockers_of(p.event)) {
      const ScenarioInstance* inst = engine.instance(b.instance);
      std::string why = b.reason == ViolationReason::forbidden
                            ? "it is forbidden while " + inst->scenario_name + " is active"
                            : "it would break the strict order of " + inst->scenario_name;
      add(instance_cause(*inst, why));
    }
  }
  for (const auto& inst : engine.instances()) {
    if (inst.status != InstanceStatus::active) continue;
    const Scenario& s = spec.scenarios[inst.scenario];
    const Step* at = step_at(s, inst.cut);
    const WaitStep* wait = at ? at->wait() : nullptr;
    if (!wait) continue;
    bool later = false;
    for (const auto& occ : message_steps(s)) {
      if (occ.path <= inst.cut) continue;
      MessagePattern g = occ.step->pattern();
      if (auto it = inst.bindings.find(g.sender); it != inst.bindings.end()) g.sender = it->second;
      if (auto it = inst.bindings.find(g.receiver); it != inst.bindings.end()) g.receiver = it->second;
      Event probe;
      probe.sender = g.sender;
      probe.receiver = g.receiver;
      probe.collection = g.collection;
      probe.message = g.message;
      if (match_pattern(target, probe, engine.world().state)) later = true;
    }
    if (!later) continue;
    std::map<std::string, std::string> rename(inst.bindings.begin(), inst.bindings.end());
    Cause c;
    c.reason_clause = "it waits until " + to_string(substitute_names(wait->condition, rename)) + " holds";
    c.provenance = {Provenance::Source::scenario, inst.scenario_name, step_id(inst.cut), inst.id, "", ""};
    c.support = {engine.current_state()};
    add(std::move(c));
  }
  return w;
}

// ---------------------------------------------------------------------------
// Explain
// ---------------------------------------------------------------------------

namespace {

std::string render_body(const std::vector<Cause>& causes) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const Cause*>> groups;
  std::vector<const Cause*> bare;
  for (const auto& c : causes) {
    if (c.subject_clause.empty()) {
      bare.push_back(&c);
      continue;
    }
    if (!groups.count(c.subject_clause)) order.push_back(c.subject_clause);
    groups[c.subject_clause].push_back(&c);
  }
  std::vector<std::string> sentences;
  bool single = order.size() + bare.size() == 1;
  for (const auto& subject : order) {
    const auto& g = groups[subject];
    if (g.size() == 1) {
      sentences.push_back(capitalize(subject) + " because " + with_period(g.front()->reason_clause));
      continue;
    }
    std::string s = capitalize(subject) + " because ";
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (i) s += " and ";
      s += strip_period(g[i]->reason_clause);
    }
    sentences.push_back(single ? s : s + ".");
  }
  for (const Cause* c : bare) sentences.push_back(capitalize(with_period(c->reason_clause)));
  std::string out;
  for (const auto& s : sentences) {
    if (!out.empty()) out += " ";
    out += s;
  }
  return out;
}

std::string provenance_text(const Cause& c) {
  std::string out;
  if (c.provenance.source == Provenance::Source::tree) {
    out = "tree " + c.provenance.tree + " node " + c.provenance.node;
  } else {
    out = "scenario " + c.provenance.scenario + " step " + c.provenance.step + " instance " + c.provenance.instance;
  }
  for (auto s : c.support) out += ", history step " + std::to_string(s);
  return out;
}

wire::Json to_json(const Provenance& p) {
  wire::Json j;
  if (p.source == Provenance::Source::tree) {
    j = {{"source", "tree"}, {"tree", p.tree}, {"node", p.node}};
  } else {
    j = {{"source", "scenario"}, {"scenario", p.scenario}, {"step", p.step}, {"instance", p.instance}};
  }
  return j;
}

}  // namespace

std::string render_explanation(const ExplanationIR& ir, const RecipientModel& recipient) {
  if (recipient.format == Format::structured || recipient.audience == Audience::machine) return to_json(ir).dump();
  std::string body = render_body(ir.causes);
  std::string text;
  if (!ir.context.empty()) {
    // Fragments keep their own casing after the lead-in.
    if (!body.empty() && !ir.causes.empty()) {
      const Cause& first = ir.causes.front();
      const std::string& lead = first.subject_clause.empty() ? first.reason_clause : first.subject_clause;
      if (!lead.empty()) body[0] = lead[0];
    }
    text = capitalize(ir.context) + ": " + body;
  } else {
    text = body;
  }
  if (recipient.audience == Audience::engineer) {
    for (const auto& c : ir.causes) {
      text += "\n  - " + strip_period(c.reason_clause) + " [" + provenance_text(c) + "]";
    }
  }
  return text;
}

std::string render_forecast(const Forecast& f, const RecipientModel& recipient) {
  if (recipient.format == Format::structured || recipient.audience == Audience::machine) return to_json(f).dump();
  if (!f.steps) {
    return f.target + " cannot be predicted within " + std::to_string(f.horizon) + " environment event" +
           (f.horizon == 1 ? "" : "s") + ".";
  }
  if (*f.steps == 0) return f.target + " can happen now.";
  std::string out = f.target + " can happen after " + std::to_string(*f.steps) + " environment event" +
                    (*f.steps == 1 ? "" : "s") + ": ";
  for (std::size_t i = 0; i < f.witness.size(); ++i) {
    if (i) out += ", then ";
    out += to_string(f.witness[i]);
  }
  return out + ".";
}

std::string render_why_not(const WhyNotAnswer& w, const RecipientModel& recipient) {
  if (recipient.format == Format::structured || recipient.audience == Audience::machine) {
    wire::Json j{{"target", w.target}, {"executable", w.executable}, {"requested", w.requested}};
    wire::Json b = wire::Json::array();
    for (const auto& c : w.blockers) {
      b.push_back({{"subject", c.subject_clause}, {"reason", c.reason_clause}, {"provenance", to_json(c.provenance)}});
    }
    j["blockers"] = b;
    return j.dump();
  }
  if (w.executable) return w.target + " is not blocked; it can happen now.";
  std::string out;
  if (w.blockers.empty()) {
    out = w.requested ? w.target + " is requested but nothing explains why it is held back."
                      : w.target + " does not happen because no active scenario requests it.";
  } else {
    out = render_body(w.blockers);
  }
  if (recipient.audience == Audience::engineer) {
    for (const auto& c : w.blockers) out += "\n  - " + strip_period(c.reason_clause) + " [" + provenance_text(c) + "]";
  }
  return out;
}

wire::Json to_json(const ExplanationNeed& need) {
  wire::Json target = std::visit(overloaded{
                                     [&](const EventTarget& t) {
                                       return wire::Json{{"type", "event"}, {"step", t.step}, {"text", need.target_text}};
                                     },
                                     [&](const ConditionTarget& t) {
                                       return wire::Json{{"type", "condition"}, {"condition", to_string(t.condition)}};
                                     },
                                     [&](const FutureTarget& t) {
                                       return wire::Json{
                                           {"type", "future"}, {"pattern", to_string(t.pattern)}, {"horizon", t.horizon}};
                                     },
                                 },
                                 need.target);
  wire::Json j{{"kind", std::string(to_string(need.kind))}, {"target", target}, {"recipient", need.recipient}};
  j["origin_rule"] = need.origin_rule ? wire::Json(*need.origin_rule) : wire::Json(nullptr);
  j["behavior_label"] = need.behavior_label;
  return j;
}

wire::Json to_json(const ExplanationIR& ir) {
  wire::Json causes = wire::Json::array();
  for (const auto& c : ir.causes) {
    causes.push_back({{"subject", c.subject_clause},
                      {"reason", c.reason_clause},
                      {"provenance", to_json(c.provenance)},
                      {"support", c.support}});
  }
  wire::Json handles = wire::Json::array();
  for (const auto& f : ir.follow_up_handles) handles.push_back({{"label", f.label}, {"need", to_json(f.need)}});
  wire::Json j{{"subject", ir.subject_clause}};
  if (!ir.context.empty()) j["context"] = ir.context;
  j["causes"] = causes;
  j["follow_ups"] = handles;
  return j;
}

wire::Json to_json(const Forecast& f) {
  wire::Json witness = wire::Json::array();
  for (const auto& e : f.witness) witness.push_back(to_string(e));
  return {{"target", f.target},
          {"horizon", f.horizon},
          {"steps", f.steps ? wire::Json(*f.steps) : wire::Json(nullptr)},
          {"witness", witness}};
}

// ---------------------------------------------------------------------------
// Ledger
// ---------------------------------------------------------------------------

const PendingLedgerEntry& Ledger::record_unexplained(const ExplanationNeed& need, std::uint64_t step) {
  std::string key = target_key(need);
  for (const auto& e : entries_) {
    if (target_key(e.need) == key && e.need.behavior_label == need.behavior_label) return e;
  }
  PendingLedgerEntry e;
  e.id = "L" + std::to_string(entries_.size() + 1);
  e.need = need;
  e.first_seen = step;
  entries_.push_back(std::move(e));
  append({{"op", "pending"}, {"id", entries_.back().id}, {"first_seen", step}, {"need", to_json(need)}});
  return entries_.back();
}

void Ledger::resolve(const std::string& id, ExplanationIR ir) {
  for (auto& e : entries_) {
    if (e.id != id || e.status == LedgerStatus::resolved) continue;
    e.status = LedgerStatus::resolved;
    append({{"op", "resolved"}, {"id", id}, {"resolution", to_json(ir)}});
    e.resolution = std::move(ir);
    return;
  }
}

std::size_t Ledger::pending_count() const {
  return std::count_if(entries_.begin(), entries_.end(),
                       [](const PendingLedgerEntry& e) { return e.status == LedgerStatus::pending; });
}

void Ledger::append(const wire::Json& line) const {
  if (path_.empty()) return;
  std::ofstream out(path_, std::ios::app);
  if (!out) throw Error("cannot append to ledger file '" + path_ + "'");
  out << line.dump() << "\n";
}

// ---------------------------------------------------------------------------
// Session
// ---------------------------------------------------------------------------

Session::Session(Engine engine, LoopConfig config, std::vector<CausalityTree> trees, std::vector<Event> alphabet,
                 std::string ledger_path)
    : engine_(std::move(engine)),
      config_(std::move(config)),
      trees_(std::move(trees)),
      alphabet_(std::move(alphabet)),
      ledger_(std::move(ledger_path)) {
  for (auto a : {Audience::end_user, Audience::engineer, Audience::machine}) {
    auto r = default_recipient(a);
    recipients_[r.id] = r;
  }
  for (const auto& r : config_.recipients) recipients_[r.id] = r;
  monitored_ = engine_.history().size();
}

BuildModels Session::models() const {
  BuildModels m;
  m.engine = &engine_;
  m.trees = &trees_;
  m.config = &config_;
  m.alphabet = &alphabet_;
  return m;
}

StepResult Session::inject(const Event& e) {
  StepResult r = engine_.inject_environment_event(e);
  iterate();
  return r;
}

StepResult Session::inject(std::string_view event_text) { return inject(parse_event(event_text, engine_.world())); }

StepResult Session::step() {
  StepResult r = engine_.step_system();
  iterate();
  return r;
}

RunResult Session::run() {
  RunResult r = engine_.run_to_quiescence();
  iterate();
  return r;
}

std::vector<SessionNotice> Session::iterate() {
  std::vector<SessionNotice> out;
  const auto& history = engine_.history();
  for (; monitored_ < history.size(); ++monitored_) stream_.ingest(event_record(history[monitored_]));
  AnalyzeResult res = analyzer_.analyze(stream_, config_, engine_.schema());
  for (auto& need : res.needs) {
    out.push_back({"need", to_json(need)});
    if (need.kind == NeedKind::system_triggered) {
      BuildModels m = models();
      BuildResult built = build_explanation(need, m);
      if (auto u = std::get_if<Unexplainable>(&built); u && u->learnable) {
        const auto& entry = ledger_.record_unexplained(need, std::get<EventTarget>(need.target).step);
        out.push_back({"unexplained", {{"ledger_id", entry.id}, {"reason", u->reason}, {"need", to_json(need)}}});
      }
    }
    needs_.push_back(std::move(need));
  }
  for (auto& q : res.unmapped_queries) out.push_back({"unmapped_query", {{"text", q}}});
  notices_.insert(notices_.end(), out.begin(), out.end());
  return out;
}

std::vector<SessionNotice> Session::take_notices() {
  std::vector<SessionNotice> out;
  out.swap(notices_);
  return out;
}

RecipientModel& Session::recipient(const std::string& id) {
  auto it = recipients_.find(id);
  if (it != recipients_.end()) return it->second;
  RecipientModel r = default_recipient(Audience::end_user);
  r.id = id;
  return recipients_[id] = r;
}

RecipientModel& Session::recipient_for(Audience a) { return recipient(default_recipient(a).id); }

void Session::react(const std::string& recipient_id, bool helpful) {
  stream_.ingest(reaction_record(recipient_id, helpful));
  iterate();
}

std::optional<std::uint64_t> Session::resolve_event_ref(std::string_view ref) const {
  const auto& history = engine_.history();
  std::string r = trim(ref);
  if (r.empty() || r == "last") {
    if (history.empty()) return std::nullopt;
    return history.size();
  }
  if (std::all_of(r.begin(), r.end(), [](unsigned char c) { return std::isdigit(c); })) {
    std::uint64_t n = std::stoull(r);
    if (n == 0 || n > history.size()) return std::nullopt;
    return n;
  }
  MessagePattern p = parse_message_pattern(r, true);
  for (std::size_t k = history.size(); k >= 1; --k) {
    if (match_pattern(p, history[k - 1].event, history[k - 1].snapshot_after)) return k;
  }
  return std::nullopt;
}

Answer Session::answer(const ExplanationNeed& need, const std::string& recipient_id) {
  Answer a;
  RecipientModel& rec = recipient(recipient_id);
  BuildModels m = models();
  m.tree_depth = rec.verbosity_depth;
  BuildResult built;
  try {
    built = build_explanation(need, m);
  } catch (const ConditionNotHolding& e) {
    return Answer{false, "", e.what(), {}, {}, "condition_not_holding"};
  } catch (const EvalError& e) {
    return Answer{false, "", e.what(), {}, {}, "bad_request"};
  }
  std::visit(overloaded{
                 [&](const ExplanationIR& ir) {
                   a.text = render_explanation(ir, rec);
                   a.follow_ups = ir.follow_up_handles;
                   a.structured = to_json(ir);
                 },
                 [&](const Unexplainable& u) {
                   a.ok = false;
                   a.error_code = "unexplainable";
                   a.text = "No explanation available: " + u.reason + ".";
                   a.structured = {{"unexplainable", u.reason}, {"learnable", u.learnable}};
                   if (u.learnable) ledger_.record_unexplained(need, engine_.current_state());
                 },
                 [&](const Forecast& f) {
                   a.text = render_forecast(f, rec);
                   a.structured = to_json(f);
                 },
             },
             built);
  last_follow_ups_ = a.follow_ups;
  return a;
}

Answer Session::why(std::string_view ref, const std::string& recipient_id) {
  std::optional<std::uint64_t> step;
  try {
    step = resolve_event_ref(ref);
  } catch (const ParseError& e) {
    return Answer{false, "why", std::string("bad event reference: ") + e.what(), {}, {}, "bad_request"};
  }
  if (!step) return Answer{false, "why", "no history entry matches '" + trim(ref) + "'", {}, {}, "unknown_target"};
  ExplanationNeed need;
  need.kind = NeedKind::user_query;
  need.target = EventTarget{*step};
  need.recipient = recipient_id;
  need.target_text = to_string(engine_.history()[*step - 1].event);
  need.behavior_label = "why " + need.target_text;
  Answer a = answer(need, recipient_id);
  a.kind = "why";
  return a;
}

Answer Session::why_condition(std::string_view condition, const std::string& recipient_id) {
  Expr cond;
  try {
    cond = parse_expression(condition);
  } catch (const ParseError& e) {
    return Answer{false, "whycond", std::string("bad condition: ") + e.what(), {}, {}, "bad_request"};
  }
  bool follow_up = std::any_of(last_follow_ups_.begin(), last_follow_ups_.end(), [&](const FollowUp& f) {
    auto c = std::get_if<ConditionTarget>(&f.need.target);
    return c && c->condition == cond;
  });
  if (follow_up) ++recipient(recipient_id).verbosity_depth;
  ExplanationNeed need;
  need.kind = NeedKind::user_query;
  need.target = ConditionTarget{cond};
  need.recipient = recipient_id;
  need.target_text = to_string(cond);
  auto label = config_.label_for(cond);
  need.behavior_label = label ? *label : "why " + need.target_text;
  Answer a = answer(need, recipient_id);
  a.kind = "whycond";
  return a;
}

Answer Session::when(std::string_view pattern, std::optional<std::size_t> horizon, const std::string& recipient_id) {
  MessagePattern p;
  try {
    p = parse_message_pattern(pattern, true);
  } catch (const ParseError& e) {
    return Answer{false, "when", std::string("bad pattern: ") + e.what(), {}, {}, "bad_request"};
  }
  ExplanationNeed need;
  need.kind = NeedKind::user_query;
  need.target = FutureTarget{p, horizon.value_or(3)};
  need.recipient = recipient_id;
  need.target_text = to_string(p);
  need.behavior_label = "when " + need.target_text;
  Answer a = answer(need, recipient_id);
  a.kind = "when";
  return a;
}

Answer Session::why_not(std::string_view pattern, const std::string& recipient_id) {
  MessagePattern p;
  try {
    p = parse_message_pattern(pattern, true);
  } catch (const ParseError& e) {
    return Answer{false, "whynot", std::string("bad pattern: ") + e.what(), {}, {}, "bad_request"};
  }
  WhyNotAnswer w = explain_why_not(engine_, p);
  Answer a;
  a.kind = "whynot";
  a.text = render_why_not(w, recipient(recipient_id));
  a.structured = wire::Json::parse(render_why_not(w, default_recipient(Audience::machine)));
  return a;
}

Answer Session::ask(std::string_view text, const std::string& recipient_id) {
  stream_.ingest(query_record(std::string(text), recipient_id));
  std::size_t before = needs_.size();
  auto notices = iterate();
  for (std::size_t i = before; i < needs_.size(); ++i) {
    if (needs_[i].kind != NeedKind::user_query) continue;
    ExplanationNeed need = needs_[i];
    if (auto c = std::get_if<ConditionTarget>(&need.target)) return why_condition(to_string(c->condition), recipient_id);
    Answer a = answer(need, recipient_id);
    a.kind = "query";
    return a;
  }
  return Answer{false, "query", "no query mapping for '" + trim(text) + "'", {}, {}, "unmapped_query"};
}

ReloadReport Session::reload(std::optional<ScenarioSpec> spec, std::optional<std::vector<CausalityTree>> trees) {
  ReloadReport report;
  Engine next = engine_.fork();
  try {
    if (spec) next.replace_spec(std::move(*spec));
  } catch (const Error& e) {
    report.error = e.what();
    report.still_pending = ledger_.pending_count();
    return report;
  }
  engine_ = std::move(next);
  if (trees) trees_ = std::move(*trees);
  report.accepted = true;
  for (const auto& entry : ledger_.entries()) {
    if (entry.status != LedgerStatus::pending) continue;
    try {
      BuildResult built = build_explanation(entry.need, models());
      if (auto ir = std::get_if<ExplanationIR>(&built)) {
        std::string id = entry.id;
        ledger_.resolve(id, *ir);
        report.resolved.push_back(id);
      }
    } catch (const Error&) {
      // stays pending
    }
  }
  report.still_pending = ledger_.pending_count();
  return report;
}

}  // namespace mabex
