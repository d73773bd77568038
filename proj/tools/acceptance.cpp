// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 when
// any criterion fails.
#include <chrono>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mabex/service.hpp"
#include "oracles.hpp"

using namespace mabex;

namespace {

const std::string kFig2Sentence =
    "Entering is disallowed because other cars are passing the obstacle in the opposite direction and a priority "
    "vehicle is registered for passing the obstacle";

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects the first failure and a short summary.
class Check {
 public:
  bool expect(bool ok, const std::string& what) {
    if (!ok && out_.pass) {
      out_.pass = false;
      out_.detail = what;
    }
    return ok;
  }
  void note(const std::string& s) {
    if (out_.pass) out_.detail = s;
  }
  Outcome done() const { return out_; }

 private:
  Outcome out_;
};

std::string in_quotes(const std::string& s) { return "\"" + s + "\""; }

std::uint64_t last_step_of(const Engine& e, std::string_view message) {
  for (auto it = e.history().rbegin(); it != e.history().rend(); ++it) {
    if (it->event.message == message) return it->step_index;
  }
  return 0;
}

struct TraceRun {
  ObjectSystem world;
  std::vector<Event> trace;
};
std::vector<TraceRun> g_runs;  // shared by criteria 6 and 7

Outcome fig2_end_to_end() {
  Check c;
  auto s = oracle::fig2_after_register();
  Answer a = s->why("last", "driver");
  c.expect(a.ok, "why failed: " + a.text);
  c.expect(a.text == kFig2Sentence, "got " + in_quotes(a.text));

  // The same query over the service must give the same bytes.
  service::Service svc;
  auto created = wire::Json::parse(svc.handle("POST", "/sessions", R"({"scene":"fig2"})").body);
  std::string id = created.value("session", "");
  for (const char* e : {"sensor -> c1.approachingObstacle()", "c1 -> oc.register()"}) {
    svc.handle("POST", "/sessions/" + id + "/events", wire::Json{{"event", e}}.dump());
  }
  svc.handle("POST", "/sessions/" + id + "/step", R"({"run":true})");
  auto remote = wire::Json::parse(svc.handle("POST", "/sessions/" + id + "/query", R"({"kind":"why"})").body);
  c.expect(remote.value("text", "") == a.text, "service answer differs: " + remote.dump());
  c.note("exact sentence, in process and over the service");
  return c.done();
}

Outcome follow_up() {
  Check c;
  auto s = oracle::fig2_after_register();
  s->why("last", "driver");
  Answer a = s->why_condition("!oc.registeredPriorityVehicles.isEmpty()", "driver");
  c.expect(a.ok, "whycond failed: " + a.text);
  c.expect(a.text.find("car registered is a priority vehicle because it is an emergency vehicle") != std::string::npos,
           "got " + in_quotes(a.text));
  auto flip = trace_condition_flip(s->engine(), parse_expression("!oc.registeredPriorityVehicles.isEmpty()"));
  const auto* f = std::get_if<FlipResult>(&flip);
  if (c.expect(f != nullptr, "no flip found")) {
    const HistoryEntry& h = s->engine().history().at(f->step - 1);
    c.expect(to_string(h.event) == "oc -> oc.registeredPriorityVehicles.add(c3)", "flip event " + to_string(h.event));
    bool from_priority = false;
    for (const auto& t : h.transitions) from_priority |= t.scenario == "SetPriorityForEmergencyVehicle";
    c.expect(from_priority, "flip step not advanced by SetPriorityForEmergencyVehicle");
    c.note("flip at step " + std::to_string(f->step) + ": " + to_string(h.event));
  }
  return c.done();
}

Outcome default_path() {
  Check c;
  auto s = v2x::load_scene("empty-road");
  s->inject("sensor -> c1.approachingObstacle()");
  s->inject("c1 -> oc.register()");
  s->run();
  std::uint64_t step = last_step_of(s->engine(), "enteringAllowed");
  c.expect(step > 0, "enteringAllowed never executed");
  Answer a = s->why("last", "driver");
  c.expect(a.text.find("there is no indication to disallow it.") != std::string::npos, "got " + in_quotes(a.text));
  bool completed = false, interrupted = false;
  for (const auto& inst : s->engine().instances()) {
    if (inst.scenario_name != "CarEnteringAllowedDefault") continue;
    completed |= inst.status == InstanceStatus::completed;
    interrupted |= inst.status == InstanceStatus::interrupted;
  }
  c.expect(completed && !interrupted, "CarEnteringAllowedDefault did not complete cleanly");
  c.note(in_quotes(a.text));
  return c.done();
}

Outcome parser_golden() {
  Check c;
  ScenarioSpec spec = v2x::listing1_spec();
  std::vector<std::string> names;
  std::size_t bindings = 0, interrupts = 0, forbidden = 0, annotations = 0;
  std::function<void(const std::vector<Step>&)> walk = [&](const std::vector<Step>& block) {
    for (const auto& st : block) {
      if (st.annotation()) ++annotations;
      if (const auto* alt = st.alternative()) {
        for (const auto& k : alt->constraints) (k.kind == ConstraintKind::forbidden ? forbidden : interrupts)++;
        walk(alt->body);
      }
    }
  };
  for (const auto& sc : spec.scenarios) {
    names.push_back(sc.name);
    bindings += sc.bindings.empty() ? 0 : 1;
    for (const auto& k : sc.constraints) (k.kind == ConstraintKind::forbidden ? forbidden : interrupts)++;
    walk(sc.body);
  }
  c.expect(names == std::vector<std::string>{"CarRegistersAtObstacle", "CarEnteringAllowedDefault",
                                              "CarEnteringDisallowedWhenCarPassing",
                                              "EnteringDisallowedForOtherPriorityVehicle",
                                              "SetPriorityForEmergencyVehicle"},
           "scenario names differ");
  c.expect(bindings == 1, "bindings clauses: " + std::to_string(bindings));
  c.expect(interrupts == 1, "interrupt constraints: " + std::to_string(interrupts));
  c.expect(forbidden == 2, "forbidden constraints: " + std::to_string(forbidden));
  c.expect(annotations == 5, "annotations: " + std::to_string(annotations));
  c.expect(parse_specification(pretty_print(spec)) == spec, "pretty-print round-trip differs");
  c.note("5 scenarios, 1 bindings, 1 interrupt, 2 forbidden, 5 annotations, round-trip equal");
  return c.done();
}

Outcome causality_oracle() {
  Check c;
  oracle::Rng rng(20240501);
  std::size_t assignments = 0;
  for (int i = 0; i < 1000 && c.done().pass; ++i) {
    auto rt = oracle::random_tree(rng, 10);
    for (std::uint64_t bits = 0; bits < (1ULL << rt.variables.size()); ++bits) {
      auto vars = oracle::assignment(rt.variables, bits);
      ++assignments;
      if (!c.expect(evaluate(rt.tree, oracle::to_snapshot(vars)) == oracle::brute_force_paths(rt.tree, vars),
                    "tree " + std::to_string(i) + " disagrees on assignment " + std::to_string(bits))) {
        break;
      }
    }
  }
  VariableSnapshot crossing{{"pedestrianApproaching", false},
                            {"pedestrianCrossing", true},
                            {"vehicleApproaching", false},
                            {"laneAGreenSeconds", std::int64_t{0}}};
  CausalityTree light = v2x::traffic_light_tree();
  auto paths = evaluate(light, crossing);
  bool labels_ok = paths.size() == 1 && paths[0].size() == 3 && light.find(paths[0][1])->label == "green for pedestrians" &&
                   light.find(paths[0][2])->label == "pedestrian crossing";
  c.expect(labels_ok, "traffic-light path differs");
  c.note("1000 trees, " + std::to_string(assignments) + " assignments; root -> green for pedestrians -> pedestrian crossing");
  return c.done();
}

Outcome determinism() {
  Check c;
  oracle::Rng rng(6);
  g_runs.clear();
  for (int i = 0; i < 100; ++i) {
    TraceRun run;
    run.world = oracle::random_world(rng, 2 + static_cast<int>(rng() % 3));
    run.trace = oracle::random_trace(rng, oracle::v2x_alphabet(run.world), 10 + rng() % 30);
    Engine a(v2x::full_spec(), run.world), b(v2x::full_spec(), run.world);
    oracle::play_trace(a, run.trace);
    oracle::play_trace(b, run.trace);
    if (!c.expect(export_history(a.history()) == export_history(b.history()), "trace " + std::to_string(i) + " differs")) {
      break;
    }
    g_runs.push_back(std::move(run));
  }
  c.note("100 traces, identical history exports");
  return c.done();
}

Outcome safety() {
  Check c;
  std::size_t events = 0, guarded = 0;
  auto scan = [&](const Engine& e, const std::string& name) {
    auto breaches = oracle::forbidden_breaches(e);
    c.expect(breaches.empty(), name + ": " + (breaches.empty() ? "" : breaches.front()));
    auto unsafe = oracle::unsafe_admissions(e);
    c.expect(unsafe.empty(), name + ": " + (unsafe.empty() ? "" : unsafe.front()));
    events += e.history().size();
    for (const auto& h : e.history()) guarded += h.forbidden_before.empty() ? 0 : 1;
  };
  c.expect(g_runs.size() == 100, "determinism runs unavailable");
  for (std::size_t i = 0; i < g_runs.size(); ++i) {
    Engine e(v2x::full_spec(), g_runs[i].world);
    oracle::play_trace(e, g_runs[i].trace);
    scan(e, "trace " + std::to_string(i));
  }
  scan(oracle::fig2_after_register()->engine(), "fig2");
  c.expect(guarded > 0, "no forbidden constraint was ever in scope");
  c.note(std::to_string(events) + " events scanned, " + std::to_string(guarded) + " with forbidden constraints in scope");
  return c.done();
}

Outcome flip_property() {
  Check c;
  oracle::Rng rng(8);
  std::size_t flips = 0;
  for (int i = 0; i < 100 && c.done().pass; ++i) {
    ObjectSystem w = i % 2 ? v2x::fig2_world() : oracle::random_world(rng, 3);
    Engine e(v2x::full_spec(), w);
    oracle::play_trace(e, oracle::random_trace(rng, oracle::v2x_alphabet(w), 5 + rng() % 30));
    for (const auto& text : oracle::flip_conditions(w)) {
      Expr cond = parse_expression(text);
      if (!oracle::holds(e, cond, e.snapshot_at(e.history().size()))) continue;
      auto r = trace_condition_flip(e, cond);
      const auto* f = std::get_if<FlipResult>(&r);
      if (!f) continue;
      ++flips;
      bool ok = f->step >= 1 && oracle::latest_flip(e, cond) == f->step && !oracle::holds(e, cond, e.snapshot_at(f->step - 1)) &&
                oracle::holds(e, cond, e.snapshot_at(f->step));
      if (!c.expect(ok, "run " + std::to_string(i) + ": " + text + " at step " + std::to_string(f->step))) break;
    }
  }
  c.expect(flips > 0, "no flip was traced");
  c.note(std::to_string(flips) + " flips, each the latest false-to-true step");
  return c.done();
}

Outcome lookahead_oracle() {
  Check c;
  auto s = oracle::fig2_after_register();
  std::size_t compared = 0;
  std::vector<std::vector<Event>> alphabets{s->alphabet()};
  std::vector<Event> wide = oracle::v2x_alphabet(s->engine().world());
  wide.resize(6);
  alphabets.push_back(wide);
  for (std::size_t ai = 0; ai < alphabets.size(); ++ai) {
    for (const char* t : {"oc -> c1.enteringAllowed()", "oc -> oc.registeredPriorityVehicles.remove(c3)",
                          "oc -> oc.passingL2.remove(c2)", "oc -> c1.enteringDisallowed()"}) {
      MessagePattern target = parse_message_pattern(t);
      for (std::size_t h = 0; h <= (ai == 0 ? 4u : 3u); ++h) {
        auto got = lookahead_query(s->engine(), target, alphabets[ai], h);
        auto want = oracle::exhaustive_reach(s->engine(), target, alphabets[ai], h);
        const auto* r = std::get_if<Reachable>(&got);
        bool same = want ? (r && r->steps == *want && oracle::witness_reaches(s->engine(), target, r->witness)) : !r;
        ++compared;
        c.expect(same, std::string(t) + " horizon " + std::to_string(h) + " disagrees");
      }
    }
  }
  Answer when = s->ask("When will I be allowed to pass the obstacle?", "driver");
  auto got = lookahead_query(s->engine(), parse_message_pattern("oc -> c1.enteringAllowed()"), s->alphabet(), 3);
  const auto* r = std::get_if<Reachable>(&got);
  c.expect(r && r->steps == 2, "fig2 'when' is not 2 steps");
  c.expect(when.ok && when.text.find("after 2 environment events") != std::string::npos, "got " + in_quotes(when.text));
  c.note(std::to_string(compared) + " (target, alphabet, horizon) cases agree; fig2 answer: 2 steps");
  return c.done();
}

Outcome model_learning() {
  Check c;
  v2x::SceneOptions o;
  o.strip_annotations = true;
  o.with_trees = false;
  auto s = oracle::fig2_after_register(o);
  c.expect(!s->ledger().entries().empty() && s->ledger().pending_count() == s->ledger().entries().size(),
           "no pending ledger entry after the stripped run");
  ReloadReport rep = s->reload(v2x::listing1_spec(), std::nullopt);
  c.expect(rep.accepted, "reload rejected: " + rep.error);
  c.expect(!rep.resolved.empty() && rep.still_pending == 0, "entries left pending");
  for (const auto& e : s->ledger().entries()) {
    if (e.need.kind != NeedKind::system_triggered) continue;
    c.expect(e.status == LedgerStatus::resolved && e.resolution, "system-triggered entry not resolved");
    if (e.resolution) {
      std::string text = render_explanation(*e.resolution, default_recipient(Audience::end_user));
      c.expect(text == kFig2Sentence, "resolution renders " + in_quotes(text));
    }
  }
  c.note(std::to_string(rep.resolved.size()) + " pending entry(s) resolved by reload; resolution renders the sentence");
  return c.done();
}

}  // namespace

int main() {
  struct Criterion {
    int number;
    const char* title;
    Outcome (*run)();
  };
  const std::vector<Criterion> criteria{
      {1, "fig2 why-answer", fig2_end_to_end},
      {2, "priority follow-up", follow_up},
      {3, "empty-road default path", default_path},
      {4, "parser golden", parser_golden},
      {5, "causality oracle", causality_oracle},
      {6, "play-out determinism", determinism},
      {7, "safety", safety},
      {8, "flip trace", flip_property},
      {9, "look-ahead oracle", lookahead_oracle},
      {10, "model-learning loop", model_learning},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = cr.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << cr.number << ": " << cr.title << " - " << o.detail << " ("
              << ms << " ms)\n";
    failed += o.pass ? 0 : 1;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed")) << "\n";
  return failed ? 1 : 0;
}
