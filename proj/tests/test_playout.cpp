#include <gtest/gtest.h>

#include <set>

#include "oracles.hpp"

using namespace mabex;

namespace {

Event ev(std::string_view text, const Engine& engine) { return parse_event(text, engine.world()); }

StepResult inject(Engine& engine, std::string_view text) { return engine.inject_environment_event(ev(text, engine)); }

std::vector<std::string> texts(const std::vector<Event>& events) {
  std::vector<std::string> out;
  for (const auto& e : events) out.push_back(to_string(e));
  return out;
}

std::multiset<std::string> transitions_of(const HistoryEntry& h, TransitionKind kind) {
  std::multiset<std::string> out;
  for (const auto& t : h.transitions) {
    if (t.kind == kind) out.insert(t.scenario);
  }
  return out;
}

std::vector<std::string> annotation_texts(const HistoryEntry& h) {
  std::vector<std::string> out;
  for (const auto& a : h.fired_annotations) out.push_back(a.text);
  return out;
}

Engine fig2_listing1() { return Engine(v2x::listing1_spec(), v2x::fig2_world()); }

Engine empty_road(bool emergency = false) {
  ObjectSystem w = v2x::base_world();
  v2x::add_car(w, "c1", "L1", emergency);
  return Engine(v2x::full_spec(), w);
}

}  // namespace

TEST(EngineInit, Fig2WorldHasNoInstances) {
  Engine e = fig2_listing1();
  EXPECT_TRUE(e.instances().empty());
  EXPECT_TRUE(e.history().empty());
  EXPECT_EQ(e.current_state(), 0u);
  EXPECT_EQ(e.snapshot_at(0), v2x::fig2_world().state);
}

TEST(EngineInit, EmptySpecIsQuiescent) {
  Engine e(ScenarioSpec{}, v2x::fig2_world());
  EXPECT_TRUE(std::holds_alternative<Quiescent>(e.step_system()));
  inject(e, "sensor -> c1.approachingObstacle()");
  EXPECT_TRUE(std::holds_alternative<Quiescent>(e.step_system()));
  EXPECT_TRUE(e.executable_events().empty());
}

TEST(EngineInit, UnbindableBinding) {
  ObjectSystem w = v2x::fig2_world();
  w.state.objects.at("cp").attributes.erase("obstacleCtrl");
  EXPECT_THROW(Engine(v2x::listing1_spec(), w), EngineError);
}

TEST(EngineInit, RejectsInvalidSpec) {
  ScenarioSpec bad = parse_specification("guarantee scenario S {\n  car -> oc.honk()\n}");
  try {
    Engine e(bad, v2x::fig2_world());
    FAIL() << "accepted";
  } catch (const SpecRejected& r) {
    ASSERT_EQ(r.diagnostics().size(), 1u);
    EXPECT_NE(r.diagnostics()[0].message.find("honk"), std::string::npos);
  }
}

TEST(Inject, ApproachSpawnsRegistration) {
  Engine e = fig2_listing1();
  StepResult r = inject(e, "sensor -> c1.approachingObstacle()");
  ASSERT_TRUE(std::holds_alternative<ExecutedEvent>(r));
  ASSERT_EQ(e.history().size(), 1u);
  EXPECT_EQ(transitions_of(e.history()[0], TransitionKind::spawned),
            std::multiset<std::string>{"CarRegistersAtObstacle"});
  ASSERT_EQ(e.instances().size(), 1u);
  EXPECT_EQ(e.instances()[0].bindings.at("car"), "c1");
  EXPECT_EQ(e.instances()[0].bindings.at("oc"), "oc");
}

TEST(Inject, RegisterCompletesAndSpawns) {
  Engine e = fig2_listing1();
  inject(e, "sensor -> c1.approachingObstacle()");
  inject(e, "c1 -> oc.register()");
  const HistoryEntry& h = e.history()[1];
  EXPECT_EQ(transitions_of(h, TransitionKind::terminated),
            (std::multiset<std::string>{"CarRegistersAtObstacle", "SetPriorityForEmergencyVehicle"}));
  EXPECT_EQ(transitions_of(h, TransitionKind::spawned),
            (std::multiset<std::string>{"CarEnteringAllowedDefault", "CarEnteringDisallowedWhenCarPassing",
                                        "EnteringDisallowedForOtherPriorityVehicle",
                                        "SetPriorityForEmergencyVehicle"}));
  EXPECT_EQ(e.instance(e.instances()[0].id)->status, InstanceStatus::completed);
}

TEST(Inject, UnmatchedEventOnlyGrowsHistory) {
  Engine e = fig2_listing1();
  inject(e, "c1 -> oc.exitedNarrowSection()");
  ASSERT_EQ(e.history().size(), 1u);
  EXPECT_TRUE(e.history()[0].transitions.empty());
  EXPECT_TRUE(e.instances().empty());
}

TEST(Inject, UnknownObjectsAndWrongOrigin) {
  Engine e = fig2_listing1();
  EXPECT_THROW(inject(e, "sensor -> c9.approachingObstacle()"), EngineError);
  EXPECT_THROW(inject(e, "oc -> c1.enteringAllowed()"), EngineError);
  EXPECT_THROW(inject(e, "c1 -> oc.nosuch.add(c1)"), EngineError);
  EXPECT_TRUE(e.history().empty());
}

TEST(Inject, StrictViolationByEnvironment) {
  Engine e = fig2_listing1();
  inject(e, "sensor -> c1.approachingObstacle()");
  std::string id = e.instances()[0].id;
  StepResult r = inject(e, "sensor -> c1.approachingObstacle()");
  ASSERT_TRUE(std::holds_alternative<Violation>(r));
  const auto& v = std::get<Violation>(r);
  EXPECT_EQ(v.instance, id);
  EXPECT_EQ(v.reason, ViolationReason::strict);
  EXPECT_FALSE(v.deadlock);
  EXPECT_EQ(e.instance(id)->status, InstanceStatus::violated);
}

TEST(Inject, ForbiddenViolationByEnvironment) {
  ScenarioSpec spec = parse_specification(R"(
guarantee scenario Guard {
  car -> oc.register()
  alternative [car.direction == L1] {
    requested oc -> car.enteringDisallowed()
  } constraints [
    forbidden car -> oc.enteredNarrowSection()
  ]
})");
  Engine e(spec, v2x::fig2_world());
  inject(e, "c1 -> oc.register()");
  StepResult r = inject(e, "c1 -> oc.enteredNarrowSection()");
  ASSERT_TRUE(std::holds_alternative<Violation>(r));
  EXPECT_EQ(std::get<Violation>(r).reason, ViolationReason::forbidden);
}

TEST(StepSystem, Fig2Disallows) {
  Engine e = fig2_listing1();
  inject(e, "sensor -> c1.approachingObstacle()");
  inject(e, "c1 -> oc.register()");
  EXPECT_EQ(texts(e.executable_events()), std::vector<std::string>{"oc -> c1.enteringDisallowed()"});
  StepResult r = e.step_system();
  ASSERT_TRUE(std::holds_alternative<ExecutedEvent>(r));
  EXPECT_EQ(to_string(std::get<ExecutedEvent>(r).event), "oc -> c1.enteringDisallowed()");
  const HistoryEntry& h = e.history().back();
  EXPECT_EQ(h.event.origin, Realm::system);
  EXPECT_EQ(transitions_of(h, TransitionKind::interrupted), std::multiset<std::string>{"CarEnteringAllowedDefault"});
  auto notes = annotation_texts(h);
  EXPECT_NE(std::find(notes.begin(), notes.end(),
                      "entering is disallowed because other cars are passing the obstacle in the opposite direction."),
            notes.end());
  EXPECT_NE(std::find(notes.begin(), notes.end(),
                      "entering is disallowed because a priority vehicle is registered for passing the obstacle."),
            notes.end());
  EXPECT_TRUE(std::holds_alternative<Quiescent>(e.step_system()));
}

TEST(StepSystem, EmptyRoadAllows) {
  Engine e = empty_road();
  inject(e, "sensor -> c1.approachingObstacle()");
  inject(e, "c1 -> oc.register()");
  RunResult run = e.run_to_quiescence();
  ASSERT_FALSE(run.violation);
  EXPECT_EQ(texts(run.events), std::vector<std::string>{"oc -> c1.enteringAllowed()"});
  EXPECT_EQ(annotation_texts(e.history().back()),
            std::vector<std::string>{"entering is allowed because there is no indication to disallow it."});
  EXPECT_EQ(transitions_of(e.history().back(), TransitionKind::terminated),
            std::multiset<std::string>{"CarEnteringAllowedDefault"});
  for (const auto& inst : e.instances()) {
    if (inst.scenario_name == "CarEnteringAllowedDefault") EXPECT_EQ(inst.status, InstanceStatus::completed);
  }
}

TEST(StepSystem, NoInstancesIsQuiescent) {
  Engine e = fig2_listing1();
  EXPECT_TRUE(std::holds_alternative<Quiescent>(e.step_system()));
  EXPECT_TRUE(e.executable_events().empty());
  EXPECT_TRUE(e.run_to_quiescence().events.empty());
}

TEST(StepSystem, CommittedBeforeRequested) {
  Engine e = empty_road(true);
  inject(e, "sensor -> c1.approachingObstacle()");
  inject(e, "c1 -> oc.register()");
  // Both candidates are pending; the tier rule decides.
  std::map<std::string, Urgency> pending;
  for (const auto& p : e.pending_requests()) pending[to_string(p.event)] = p.urgency;
  ASSERT_EQ(pending.size(), 2u);
  EXPECT_EQ(pending.at("oc -> oc.registeredPriorityVehicles.add(c1)"), Urgency::committed);
  EXPECT_EQ(pending.at("oc -> c1.enteringAllowed()"), Urgency::requested);
  RunResult run = e.run_to_quiescence();
  ASSERT_FALSE(run.violation);
  EXPECT_EQ(texts(run.events),
            (std::vector<std::string>{"oc -> oc.registeredPriorityVehicles.add(c1)", "oc -> c1.enteringAllowed()"}));
  EXPECT_EQ(e.world().state.objects.at("oc").collections.at("registeredPriorityVehicles"),
            std::vector<ObjectId>{"c1"});
}

TEST(StepSystem, TwoCarsOneAdmissionEach) {
  ObjectSystem w = v2x::base_world();
  v2x::add_car(w, "c1", "L1");
  v2x::add_car(w, "c2", "L2");
  Engine e(v2x::full_spec(), w);
  for (const char* t : {"sensor -> c1.approachingObstacle()", "c1 -> oc.register()", "sensor -> c2.approachingObstacle()",
                        "c2 -> oc.register()"}) {
    inject(e, t);
  }
  // Oracle: one admission per registered car whose default scenario is still waiting.
  std::set<std::string> expected;
  for (const auto& inst : e.instances()) {
    if (inst.scenario_name == "CarEnteringAllowedDefault" && inst.status == InstanceStatus::active) {
      expected.insert("oc -> " + inst.bindings.at("car") + ".enteringAllowed()");
    }
  }
  EXPECT_EQ(expected, (std::set<std::string>{"oc -> c1.enteringAllowed()", "oc -> c2.enteringAllowed()"}));
  auto got = texts(e.executable_events());
  EXPECT_EQ(std::set<std::string>(got.begin(), got.end()), expected);
  EXPECT_EQ(got.size(), expected.size());
  // Declaration order of the scenarios, then binding ids.
  EXPECT_EQ(got.front(), "oc -> c1.enteringAllowed()");
}

TEST(StepSystem, DeadlockIsReported) {
  ScenarioSpec spec = parse_specification(R"(
guarantee scenario Want {
  car -> oc.register()
  requested oc -> car.enteringAllowed()
}
guarantee scenario Block {
  car -> oc.register()
  alternative [car.direction == L1] {
    oc -> car.enteringDisallowed()
  } constraints [
    forbidden oc -> car.enteringAllowed()
  ]
})");
  Engine e(spec, v2x::fig2_world());
  inject(e, "c1 -> oc.register()");
  StepResult r = e.step_system();
  ASSERT_TRUE(std::holds_alternative<Violation>(r));
  const auto& v = std::get<Violation>(r);
  EXPECT_TRUE(v.deadlock);
  EXPECT_EQ(v.reason, ViolationReason::forbidden);
  EXPECT_EQ(to_string(v.event), "oc -> c1.enteringAllowed()");
  EXPECT_EQ(e.history().size(), 1u);
  RunResult run = e.run_to_quiescence();
  ASSERT_TRUE(run.violation);
  EXPECT_TRUE(run.violation->deadlock);
  auto blockers = e.blockers_of(v.event);
  ASSERT_EQ(blockers.size(), 1u);
  EXPECT_EQ(e.instance(blockers[0].instance)->scenario_name, "Block");
}

TEST(StepSystem, GuardStability) {
  // Guards false: the disallow alternatives are skipped and forbid nothing.
  Engine e = empty_road();
  inject(e, "sensor -> c1.approachingObstacle()");
  inject(e, "c1 -> oc.register()");
  EXPECT_TRUE(e.blockers_of(ev("oc -> c1.enteringAllowed()", e)).empty());
  for (const auto& inst : e.instances()) {
    if (inst.scenario_name == "CarEnteringDisallowedWhenCarPassing") EXPECT_EQ(inst.status, InstanceStatus::completed);
  }
  // Guards true: the same event is forbidden.
  Engine f = fig2_listing1();
  inject(f, "sensor -> c1.approachingObstacle()");
  inject(f, "c1 -> oc.register()");
  auto blockers = f.blockers_of(ev("oc -> c1.enteringAllowed()", f));
  std::set<std::string> names;
  for (const auto& b : blockers) names.insert(f.instance(b.instance)->scenario_name);
  EXPECT_EQ(names, (std::set<std::string>{"CarEnteringDisallowedWhenCarPassing",
                                          "EnteringDisallowedForOtherPriorityVehicle"}));
}

TEST(Effects, CollectionsAndAttributes) {
  Engine e = empty_road();
  inject(e, "sensor -> c1.approachingObstacle()");
  inject(e, "c1 -> oc.register()");
  e.run_to_quiescence();
  EXPECT_EQ(e.world().state.objects.at("c1").attributes.at("registered"), Value(true));
  inject(e, "c1 -> oc.enteredNarrowSection()");
  e.run_to_quiescence();
  const auto& oc = e.world().state.objects.at("oc");
  EXPECT_EQ(oc.collections.at("passingL1"), std::vector<ObjectId>{"c1"});
  EXPECT_EQ(e.world().state.objects.at("c1").attributes.at("position"), Value(Symbol{"passing"}));
  inject(e, "c1 -> oc.enteredNarrowSection()");
  e.run_to_quiescence();
  EXPECT_EQ(e.world().state.objects.at("oc").collections.at("passingL1"), std::vector<ObjectId>{"c1"});
  inject(e, "c1 -> oc.exitedNarrowSection()");
  e.run_to_quiescence();
  EXPECT_TRUE(e.world().state.objects.at("oc").collections.at("passingL1").empty());
  EXPECT_TRUE(v2x::check_invariants(e.world().state).empty());
}

TEST(History, Fig4RunHasThreeEntries) {
  Engine e = fig2_listing1();
  inject(e, "sensor -> c1.approachingObstacle()");
  inject(e, "c1 -> oc.register()");
  RunResult run = e.run_to_quiescence();
  EXPECT_EQ(texts(run.events), std::vector<std::string>{"oc -> c1.enteringDisallowed()"});
  ASSERT_EQ(e.history().size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(e.history()[i].step_index, i + 1);
}

TEST(History, SnapshotsAreFrozen) {
  Engine e = empty_road();
  inject(e, "sensor -> c1.approachingObstacle()");
  ObjectSnapshot first = e.history()[0].snapshot_after;
  const ObjectSnapshot* addr = &e.history()[0].snapshot_after;
  inject(e, "c1 -> oc.register()");
  e.run_to_quiescence();
  inject(e, "c1 -> oc.enteredNarrowSection()");
  EXPECT_EQ(e.history()[0].snapshot_after, first);
  EXPECT_EQ(e.snapshot_at(1), first);
  EXPECT_NE(e.world().state, first);
  (void)addr;
}

TEST(History, ExportFieldOrder) {
  Engine e = fig2_listing1();
  inject(e, "sensor -> c1.approachingObstacle()");
  auto j = wire::Json::parse(export_history_line(e.history()[0]));
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  EXPECT_EQ(keys, (std::vector<std::string>{"step_index", "event", "transitions", "annotations", "digest"}));
  EXPECT_EQ(j["event"]["text"], "sensor -> c1.approachingObstacle()");
  EXPECT_EQ(j["digest"], snapshot_digest(e.history()[0].snapshot_after));
  EXPECT_EQ(export_history(e.history()), export_history_line(e.history()[0]) + "\n");
}

TEST(Fork, CopyIsIndependent) {
  Engine e = fig2_listing1();
  inject(e, "sensor -> c1.approachingObstacle()");
  Engine copy = e.fork();
  inject(copy, "c1 -> oc.register()");
  copy.run_to_quiescence();
  EXPECT_EQ(e.history().size(), 1u);
  EXPECT_EQ(copy.history().size(), 3u);
  EXPECT_EQ(e.instances().size(), 1u);
}

TEST(Fork, QuiescentStaysQuiescent) {
  Engine e = fig2_listing1();
  Engine copy = e.fork();
  EXPECT_TRUE(std::holds_alternative<Quiescent>(copy.step_system()));
  EXPECT_EQ(copy.state_digest(), e.state_digest());
}

TEST(Fork, RandomDivergenceDoesNotLeak) {
  oracle::Rng rng(7);
  for (int run = 0; run < 100; ++run) {
    ObjectSystem w = oracle::random_world(rng, 3);
    Engine base(v2x::full_spec(), w);
    auto alphabet = oracle::v2x_alphabet(base.world());
    oracle::play_trace(base, oracle::random_trace(rng, alphabet, 4));
    std::string before = export_history(base.history());
    std::string digest = base.state_digest();
    Engine a = base.fork();
    Engine b = base.fork();
    oracle::play_trace(a, oracle::random_trace(rng, alphabet, 5));
    oracle::play_trace(b, oracle::random_trace(rng, alphabet, 5));
    ASSERT_EQ(export_history(base.history()), before) << "run " << run;
    ASSERT_EQ(base.state_digest(), digest) << "run " << run;
    // Each fork still starts with the shared prefix.
    ASSERT_EQ(export_history(a.history()).substr(0, before.size()), before);
    ASSERT_EQ(export_history(b.history()).substr(0, before.size()), before);
  }
}

TEST(ReplaceSpec, KeepsMatchingInstances) {
  Engine e(strip_annotations(v2x::full_spec()), v2x::fig2_world());
  inject(e, "sensor -> c1.approachingObstacle()");
  inject(e, "c1 -> oc.register()");
  e.replace_spec(v2x::full_spec());
  for (const auto& inst : e.instances()) EXPECT_NE(inst.status, InstanceStatus::interrupted) << inst.scenario_name;
  e.run_to_quiescence();
  EXPECT_EQ(e.history().back().fired_annotations.size(), 2u);

  Engine f = fig2_listing1();
  inject(f, "sensor -> c1.approachingObstacle()");
  f.replace_spec(ScenarioSpec{});
  EXPECT_EQ(f.instances()[0].status, InstanceStatus::interrupted);
  EXPECT_THROW(f.replace_spec(parse_specification("guarantee scenario S {\n car -> oc.honk()\n}")), SpecRejected);
}

TEST(Events, ParseAndPrint) {
  Engine e = fig2_listing1();
  Event a = ev("oc -> oc.registeredPriorityVehicles.add(c1)", e);
  EXPECT_EQ(a.origin, Realm::system);
  EXPECT_EQ(a.collection, std::optional<std::string>("registeredPriorityVehicles"));
  ASSERT_EQ(a.args.size(), 1u);
  EXPECT_EQ(a.args[0], Value(ObjectRef{"c1"}));
  EXPECT_EQ(to_string(a), "oc -> oc.registeredPriorityVehicles.add(c1)");
  EXPECT_EQ(ev("sensor -> c1.approachingObstacle()", e).origin, Realm::environment);
  EXPECT_THROW(ev("nobody -> c1.approachingObstacle()", e), EngineError);
  EXPECT_THROW(ev("sensor -> c1", e), ParseError);
}

TEST(Events, PatternMatching) {
  Engine e = fig2_listing1();
  Event a = ev("oc -> c1.enteringAllowed()", e);
  std::map<std::string, ObjectId> b;
  EXPECT_TRUE(match_pattern(parse_message_pattern("oc -> car.enteringAllowed()"), a, e.world().state, &b));
  EXPECT_EQ(b.at("car"), "c1");
  EXPECT_TRUE(match_pattern(parse_message_pattern("* -> c1.enteringAllowed()"), a, e.world().state));
  EXPECT_FALSE(match_pattern(parse_message_pattern("oc -> c2.enteringAllowed()"), a, e.world().state));
  EXPECT_FALSE(match_pattern(parse_message_pattern("x -> x.enteringAllowed()"), a, e.world().state));
}
