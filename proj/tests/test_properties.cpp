// Randomized properties of the parser, the engine and the flip tracer.
#include <gtest/gtest.h>

#include <functional>
#include <set>

#include "oracles.hpp"

using namespace mabex;

namespace {

using oracle::Rng;

std::size_t pick(Rng& rng, std::size_t n) { return rng() % n; }
bool coin(Rng& rng, unsigned pct) { return rng() % 100 < pct; }

const std::vector<std::string> kRoles{"car", "oc", "sensor", "cp", "other"};
const std::vector<std::string> kAttrs{"direction", "position", "registered", "obstacleCtrl", "passingL1"};
const std::vector<std::string> kWords{"the", "car", "waits", "because", "lane", "is", "busy", "priority", "L1", "-", "ok,"};

Expr random_expr(Rng& rng, int depth) {
  if (depth == 0 || coin(rng, 25)) {
    switch (pick(rng, 4)) {
      case 0: return make_literal(coin(rng, 50));
      case 1: return make_literal(static_cast<std::int64_t>(pick(rng, 1000)));
      default: return make_name(kRoles[pick(rng, kRoles.size())]);
    }
  }
  switch (pick(rng, 6)) {
    case 0: return make_member(random_expr(rng, depth - 1), kAttrs[pick(rng, kAttrs.size())]);
    case 1: return make_predicate(random_expr(rng, depth - 1), Predicate::is_empty);
    case 2: return make_predicate(random_expr(rng, depth - 1), Predicate::contains, {random_expr(rng, depth - 1)});
    case 3: return make_instance_of(random_expr(rng, depth - 1), coin(rng, 50) ? "Car" : "EmergencyVehicle");
    case 4: return make_not(random_expr(rng, depth - 1));
    default: {
      auto op = static_cast<BinaryOp>(pick(rng, 8));
      return make_binary(op, random_expr(rng, depth - 1), random_expr(rng, depth - 1));
    }
  }
}

std::string random_text(Rng& rng) {
  std::string out;
  std::size_t n = 1 + pick(rng, 8);
  for (std::size_t i = 0; i < n; ++i) out += (i ? " " : "") + kWords[pick(rng, kWords.size())];
  return out;
}

MessageStep random_message(Rng& rng, bool modal) {
  MessageStep m;
  m.sender = kRoles[pick(rng, kRoles.size())];
  m.receiver = kRoles[pick(rng, kRoles.size())];
  if (coin(rng, 20)) {
    m.collection = coin(rng, 50) ? "passingL1" : "registeredPriorityVehicles";
    m.message = coin(rng, 50) ? "add" : "remove";
    m.args.push_back(make_name(kRoles[pick(rng, kRoles.size())]));
  } else {
    static const std::vector<std::string> names{"register", "enteringAllowed", "enteringDisallowed", "honk"};
    m.message = names[pick(rng, names.size())];
    if (coin(rng, 15)) m.args.push_back(random_expr(rng, 1));
  }
  if (modal) {
    m.strict = coin(rng, 40);
    m.urgency = static_cast<Urgency>(pick(rng, 3));
  }
  if (coin(rng, 30)) m.annotation = random_text(rng);
  return m;
}

std::vector<Constraint> random_constraints(Rng& rng) {
  std::vector<Constraint> out;
  std::size_t n = coin(rng, 50) ? 0 : 1 + pick(rng, 2);
  for (std::size_t i = 0; i < n; ++i) {
    MessageStep m = random_message(rng, false);
    out.push_back({coin(rng, 50) ? ConstraintKind::forbidden : ConstraintKind::interrupt, m.pattern(), {}});
  }
  return out;
}

std::vector<Step> random_block(Rng& rng, int depth, std::size_t min_len) {
  std::vector<Step> out;
  std::size_t n = min_len + pick(rng, 4);
  for (std::size_t i = 0; i < n; ++i) {
    unsigned r = rng() % 10;
    if (r < 6 || depth == 0) {
      out.push_back({random_message(rng, true)});
    } else if (r < 8) {
      AlternativeStep a;
      a.guard = random_expr(rng, 3);
      a.body = random_block(rng, depth - 1, 1);
      a.constraints = random_constraints(rng);
      if (coin(rng, 20)) a.annotation = random_text(rng);
      out.push_back({std::move(a)});
    } else {
      WaitStep w;
      w.condition = random_expr(rng, 2);
      if (coin(rng, 20)) w.annotation = random_text(rng);
      out.push_back({std::move(w)});
    }
  }
  return out;
}

ScenarioSpec random_spec(Rng& rng) {
  ScenarioSpec spec;
  std::size_t n = 1 + pick(rng, 4);
  for (std::size_t i = 0; i < n; ++i) {
    Scenario s;
    s.kind = coin(rng, 80) ? ScenarioKind::guarantee : ScenarioKind::assumption;
    s.name = "S" + std::to_string(i);
    if (coin(rng, 30)) s.bindings.push_back({"oc", make_member(make_name("cp"), "obstacleCtrl"), {}});
    s.body.push_back({random_message(rng, false)});
    auto rest = random_block(rng, 2, 0);
    s.body.insert(s.body.end(), rest.begin(), rest.end());
    s.constraints = random_constraints(rng);
    spec.scenarios.push_back(std::move(s));
  }
  return spec;
}

// Literal grounding of a scenario message under an instance's bindings;
// unknown roles match anything, arguments that are bound roles must agree.
bool grounded_match(const MessageStep& m, const std::map<std::string, ObjectId>& b, const Event& e) {
  auto term = [&](const std::string& role, const std::string& id) {
    auto it = b.find(role);
    return it == b.end() || it->second == id;
  };
  if (m.message != e.message || m.collection != e.collection) return false;
  if (!term(m.sender, e.sender) || !term(m.receiver, e.receiver)) return false;
  if (m.args.size() != e.args.size()) return false;
  for (std::size_t i = 0; i < m.args.size(); ++i) {
    const auto* name = std::get_if<NameExpr>(&m.args[i].node().kind);
    const auto* ref = std::get_if<ObjectRef>(&e.args[i]);
    if (name && ref && b.count(name->name) && b.at(name->name) != ref->id) return false;
  }
  return true;
}

struct StrictCheck {
  std::size_t checked = 0;
  std::vector<std::string> failures;
};

// Compares instance states around one executed event.
void check_strictness(const Engine& engine, const std::vector<ScenarioInstance>& before, const Event& e, StrictCheck& out) {
  for (const auto& inst : before) {
    if (inst.status != InstanceStatus::active) continue;
    const Scenario& sc = engine.spec().scenarios[inst.scenario];
    const Step* at = step_at(sc, inst.cut);
    const MessageStep* awaited = at ? at->message() : nullptr;
    if (!awaited || !awaited->strict) continue;
    if (grounded_match(*awaited, inst.bindings, e)) continue;
    bool other = false;
    for (const auto& occ : message_steps(sc)) other |= occ.path != inst.cut && grounded_match(*occ.step, inst.bindings, e);
    if (!other) continue;
    ++out.checked;
    const ScenarioInstance* now = engine.instance(inst.id);
    if (!now || now->status != InstanceStatus::violated) {
      out.failures.push_back(inst.id + " (" + inst.scenario_name + ") not violated by " + to_string(e));
    }
  }
}

// Plays a trace while checking strictness at every executed event.
StrictCheck play_checked(Engine& engine, const std::vector<Event>& trace) {
  StrictCheck out;
  for (const auto& e : trace) {
    auto before = engine.instances();
    try {
      engine.inject_environment_event(e);
    } catch (const EngineError&) {
      continue;
    }
    check_strictness(engine, before, e, out);
    for (int guard = 0; guard < 1000; ++guard) {
      before = engine.instances();
      StepResult r = engine.step_system();
      auto ex = std::get_if<ExecutedEvent>(&r);
      if (!ex) break;
      check_strictness(engine, before, ex->event, out);
    }
  }
  return out;
}

struct RandomRun {
  ObjectSystem world;
  std::vector<Event> trace;
};

RandomRun random_run(Rng& rng) {
  RandomRun r;
  r.world = oracle::random_world(rng, 2 + static_cast<int>(pick(rng, 3)));
  r.trace = oracle::random_trace(rng, oracle::v2x_alphabet(r.world), 10 + pick(rng, 30));
  return r;
}

}  // namespace

TEST(ExprProperty, PrintParseRoundTrip) {
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    Expr e = random_expr(rng, 4);
    std::string text = to_string(e);
    Expr back = parse_expression(text);
    ASSERT_EQ(back, e) << text;
    ASSERT_EQ(to_string(back), text);
  }
}

TEST(SpecProperty, PrettyPrintRoundTrip) {
  Rng rng(2);
  for (int i = 0; i < 500; ++i) {
    ScenarioSpec spec = random_spec(rng);
    std::string text = pretty_print(spec);
    ScenarioSpec back;
    try {
      back = parse_specification(text);
    } catch (const ParseError& e) {
      FAIL() << e.what() << "\n" << text;
    }
    ASSERT_EQ(back, spec) << text;
    ASSERT_EQ(pretty_print(back), text);
    ASSERT_EQ(parse_specification(text), back);
  }
}

TEST(EngineProperty, DeterministicHistories) {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    RandomRun run = random_run(rng);
    Engine a(v2x::full_spec(), run.world), b(v2x::full_spec(), run.world);
    auto oa = oracle::play_trace(a, run.trace);
    auto ob = oracle::play_trace(b, run.trace);
    ASSERT_EQ(export_history(a.history()), export_history(b.history())) << "trace " << i;
    EXPECT_EQ(a.state_digest(), b.state_digest());
    EXPECT_EQ(oa.violations, ob.violations);
    EXPECT_EQ(oa.rejected, ob.rejected);
  }
}

TEST(EngineProperty, NoForbiddenEventIsChosen) {
  Rng rng(4);
  std::size_t scanned = 0, in_scope = 0;
  for (int i = 0; i < 100; ++i) {
    RandomRun run = random_run(rng);
    Engine e(v2x::full_spec(), run.world);
    oracle::play_trace(e, run.trace);
    auto breaches = oracle::forbidden_breaches(e);
    ASSERT_TRUE(breaches.empty()) << breaches.front();
    auto unsafe = oracle::unsafe_admissions(e);
    ASSERT_TRUE(unsafe.empty()) << unsafe.front();
    scanned += e.history().size();
    for (const auto& h : e.history()) in_scope += h.forbidden_before.empty() ? 0 : 1;
  }
  // The property is not vacuous.
  EXPECT_GT(in_scope, 50u);
  EXPECT_GT(scanned, 1000u);
}

TEST(EngineProperty, StrictStepsAreEnforced) {
  Rng rng(5);
  std::size_t checked = 0;
  for (int i = 0; i < 100; ++i) {
    RandomRun run = random_run(rng);
    Engine e(v2x::full_spec(), run.world);
    StrictCheck c = play_checked(e, run.trace);
    ASSERT_TRUE(c.failures.empty()) << c.failures.front();
    checked += c.checked;
  }
  EXPECT_GT(checked, 10u);
}

TEST(EngineProperty, EveryInstanceEndsAtMostOnce) {
  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    RandomRun run = random_run(rng);
    Engine e(v2x::full_spec(), run.world);
    oracle::play_trace(e, run.trace);
    std::map<std::string, int> spawned, ended;
    std::map<std::string, TransitionKind> last;
    for (const auto& h : e.history()) {
      for (const auto& t : h.transitions) {
        ASSERT_EQ(ended[t.instance], 0) << t.instance << " moves after it ended";
        if (t.kind == TransitionKind::spawned) ++spawned[t.instance];
        if (t.kind == TransitionKind::terminated || t.kind == TransitionKind::violated ||
            t.kind == TransitionKind::interrupted) {
          ++ended[t.instance];
        }
        last[t.instance] = t.kind;
      }
    }
    for (const auto& inst : e.instances()) {
      ASSERT_EQ(spawned[inst.id], 1) << inst.id;
      bool active = inst.status == InstanceStatus::active;
      EXPECT_EQ(ended[inst.id], active ? 0 : 1) << inst.id;
      if (!active) {
        TransitionKind want = inst.status == InstanceStatus::completed   ? TransitionKind::terminated
                              : inst.status == InstanceStatus::violated ? TransitionKind::violated
                                                                        : TransitionKind::interrupted;
        EXPECT_EQ(last[inst.id], want) << inst.id;
      }
    }
    for (const auto& [id, n] : spawned) EXPECT_TRUE(e.instance(id)) << id << " spawned but unknown";
  }
}

TEST(FlipProperty, FlipEventTurnsConditionTrue) {
  Rng rng(7);
  std::size_t flips = 0, initially = 0, not_holding = 0;
  for (int i = 0; i < 60; ++i) {
    RandomRun run = random_run(rng);
    if (i % 2) {
      // Registries that are full from the start give initially-true conditions.
      run.world = v2x::fig2_world();
      run.trace = oracle::random_trace(rng, oracle::v2x_alphabet(run.world), 5 + pick(rng, 10));
    }
    Engine e(v2x::full_spec(), run.world);
    oracle::play_trace(e, run.trace);
    for (const auto& text : oracle::flip_conditions(run.world)) {
      Expr cond = parse_expression(text);
      bool now = oracle::holds(e, cond, e.snapshot_at(e.history().size()));
      if (!now) {
        EXPECT_THROW(trace_condition_flip(e, cond), ConditionNotHolding) << text;
        ++not_holding;
        continue;
      }
      auto r = trace_condition_flip(e, cond);
      auto want = oracle::latest_flip(e, cond);
      if (auto f = std::get_if<FlipResult>(&r)) {
        ++flips;
        ASSERT_GE(f->step, 1u);
        EXPECT_FALSE(oracle::holds(e, cond, e.snapshot_at(f->step - 1))) << text;
        EXPECT_TRUE(oracle::holds(e, cond, e.snapshot_at(f->step))) << text;
        EXPECT_EQ(to_string(f->event), to_string(e.history().at(f->step - 1).event));
        EXPECT_EQ(want, std::optional<std::uint64_t>(f->step)) << text;
      } else {
        ++initially;
        EXPECT_FALSE(want.has_value()) << text;
        EXPECT_TRUE(oracle::holds(e, cond, e.snapshot_at(0))) << text;
      }
    }
  }
  EXPECT_GT(flips, 100u);
  EXPECT_GT(initially, 10u);
  EXPECT_GT(not_holding, 100u);
}

TEST(LookaheadProperty, Fig2AgreesWithExhaustiveSearch) {
  auto s = oracle::fig2_after_register();
  std::vector<Event> alphabet = oracle::v2x_alphabet(s->engine().world());
  alphabet.resize(8);
  for (const char* t : {"oc -> c1.enteringAllowed()", "oc -> oc.registeredPriorityVehicles.remove(c3)",
                        "oc -> oc.passingL2.remove(c2)", "oc -> c2.enteringAllowed()"}) {
    MessagePattern target = parse_message_pattern(t);
    for (std::size_t h = 0; h <= 2; ++h) {
      auto got = lookahead_query(s->engine(), target, alphabet, h);
      auto want = oracle::exhaustive_reach(s->engine(), target, alphabet, h);
      if (want) {
        ASSERT_TRUE(std::holds_alternative<Reachable>(got)) << t << " h=" << h;
        EXPECT_EQ(std::get<Reachable>(got).steps, *want) << t << " h=" << h;
        EXPECT_TRUE(oracle::witness_reaches(s->engine(), target, std::get<Reachable>(got).witness));
      } else {
        EXPECT_TRUE(std::holds_alternative<Unknown>(got)) << t << " h=" << h;
      }
    }
  }
}
