#include <gtest/gtest.h>

#include "mabex/v2x.hpp"

using namespace mabex;

namespace {

std::string listing1_text() { return std::string(*v2x::builtin_resource("v2x/listing1.sml")); }

std::size_t count_constraints(const std::vector<Step>& body, ConstraintKind k) {
  std::size_t n = 0;
  for (const auto& s : body) {
    if (auto a = s.alternative()) {
      for (const auto& c : a->constraints) n += c.kind == k;
      n += count_constraints(a->body, k);
    }
  }
  return n;
}

std::size_t count_annotations(const std::vector<Step>& body) {
  std::size_t n = 0;
  for (const auto& s : body) {
    n += s.annotation().has_value();
    if (auto a = s.alternative()) n += count_annotations(a->body);
  }
  return n;
}

ParseError parse_error(std::string_view text) {
  try {
    parse_specification(text);
  } catch (const ParseError& e) {
    return e;
  }
  ADD_FAILURE() << "no parse error for: " << text;
  return ParseError({}, "");
}

}  // namespace

TEST(ScenarioParser, Listing1Structure) {
  ScenarioSpec spec = parse_specification(listing1_text());
  ASSERT_EQ(spec.scenarios.size(), 5u);
  std::vector<std::string> names;
  for (const auto& s : spec.scenarios) names.push_back(s.name);
  EXPECT_EQ(names, (std::vector<std::string>{"CarRegistersAtObstacle", "CarEnteringAllowedDefault",
                                             "CarEnteringDisallowedWhenCarPassing",
                                             "EnteringDisallowedForOtherPriorityVehicle",
                                             "SetPriorityForEmergencyVehicle"}));
  std::size_t bindings = 0, interrupts = 0, forbidden = 0, annotations = 0;
  for (const auto& s : spec.scenarios) {
    EXPECT_EQ(s.kind, ScenarioKind::guarantee);
    bindings += s.bindings.empty() ? 0 : 1;
    for (const auto& c : s.constraints) {
      interrupts += c.kind == ConstraintKind::interrupt;
      forbidden += c.kind == ConstraintKind::forbidden;
    }
    forbidden += count_constraints(s.body, ConstraintKind::forbidden);
    interrupts += count_constraints(s.body, ConstraintKind::interrupt);
    annotations += count_annotations(s.body);
  }
  EXPECT_EQ(bindings, 1u);
  EXPECT_EQ(interrupts, 1u);
  EXPECT_EQ(forbidden, 2u);
  EXPECT_EQ(annotations, 5u);
}

TEST(ScenarioParser, Listing1Modalities) {
  ScenarioSpec spec = parse_specification(listing1_text());
  const Scenario& reg = spec.scenarios[0];
  ASSERT_EQ(reg.bindings.size(), 1u);
  EXPECT_EQ(reg.bindings[0].role, "oc");
  EXPECT_EQ(to_string(reg.bindings[0].value), "cp.obstacleCtrl");
  const MessageStep* first = reg.body[0].message();
  ASSERT_NE(first, nullptr);
  EXPECT_EQ(first->urgency, Urgency::none);
  EXPECT_FALSE(first->strict);
  const MessageStep* second = reg.body[1].message();
  ASSERT_NE(second, nullptr);
  EXPECT_TRUE(second->strict);
  EXPECT_EQ(second->urgency, Urgency::requested);
  // Annotation with no space after the colon, trailing blank stripped.
  EXPECT_EQ(*second->annotation, "when approaching an obstacle, the car must register at the obstacle control");

  const Scenario& prio = spec.scenarios[4];
  const AlternativeStep* alt = prio.body[1].alternative();
  ASSERT_NE(alt, nullptr);
  EXPECT_EQ(to_string(alt->guard), "car instanceOf EmergencyVehicle");
  const MessageStep* add = alt->body[0].message();
  ASSERT_NE(add, nullptr);
  EXPECT_TRUE(add->strict);
  EXPECT_EQ(add->urgency, Urgency::committed);
  EXPECT_EQ(add->receiver, "oc");
  EXPECT_EQ(add->collection, std::optional<std::string>("registeredPriorityVehicles"));
  EXPECT_EQ(add->message, "add");
  ASSERT_EQ(add->args.size(), 1u);
  EXPECT_EQ(*add->annotation, "car registered is a priority vehicle because it is an emergency vehicle.");

  const AlternativeStep* passing = spec.scenarios[2].body[1].alternative();
  ASSERT_NE(passing, nullptr);
  EXPECT_EQ(to_string(passing->guard),
            "car.direction == L1 && !oc.passingL2.isEmpty() || car.direction == L2 && !oc.passingL1.isEmpty()");
  ASSERT_EQ(passing->constraints.size(), 1u);
  EXPECT_EQ(to_string(passing->constraints[0].pattern), "oc -> car.enteringAllowed()");
}

TEST(ScenarioParser, EmptyInput) {
  EXPECT_TRUE(parse_specification("").scenarios.empty());
  EXPECT_TRUE(parse_specification("  \n// only a comment\n").scenarios.empty());
}

TEST(ScenarioParser, UnterminatedScenario) {
  ParseError e = parse_error("guarantee scenario X {");
  EXPECT_EQ(e.loc().line, 1);
  EXPECT_EQ(e.loc().column, 23);
  EXPECT_NE(std::find(e.expected().begin(), e.expected().end(), "}"), e.expected().end());
}

TEST(ScenarioParser, UnknownModality) {
  ParseError e = parse_error("guarantee scenario X {\n  eventual a -> b.m()\n}");
  EXPECT_EQ(e.loc().line, 2);
  EXPECT_NE(std::string(e.what()).find("eventual"), std::string::npos);
}

TEST(ScenarioParser, UnbalancedBraces) {
  parse_error("guarantee scenario X {\n a -> b.m()\n}\n}");
  parse_error("guarantee scenario X {\n alternative [a.x] {\n a -> b.m()\n}");
}

TEST(ScenarioParser, OtherErrors) {
  parse_error("scenario X { a -> b.m() }");
  parse_error("guarantee scenario X { a -> b -> c.m() }");
  parse_error("guarantee scenario X { a -> b.c.d.m() }");
  parse_error("guarantee scenario X { a -> b.m() } constraints [ sometimes a -> b.m() ]");
  parse_error("guarantee scenario X { alternative [a.x == ] { a -> b.m() } }");
  parse_error("guarantee scenario X { a -> b.m() }\nguarantee scenario X { a -> b.m() }");
}

TEST(ScenarioParser, AnnotationAttachesToFollowingStepOnly) {
  ScenarioSpec spec = parse_specification(R"(
guarantee scenario A {
  // @EX:   first
  a -> b.m()
  // plain comment
  a -> b.n()
  // @EX: third because reasons.
  alternative [a.x] {
    a -> b.o()
  }
})");
  const auto& body = spec.scenarios[0].body;
  EXPECT_EQ(body[0].annotation(), std::optional<std::string>("first"));
  EXPECT_FALSE(body[1].annotation().has_value());
  EXPECT_EQ(body[2].annotation(), std::optional<std::string>("third because reasons."));
  EXPECT_FALSE(body[2].alternative()->body[0].annotation().has_value());
}

TEST(ScenarioParser, WaitStepAndComparisons) {
  ScenarioSpec spec = parse_specification(R"(
assumption scenario W {
  a -> b.m(1, L1)
  wait [b.count >= 2 && b.mode != idle]
  committed b -> a.n()
})");
  const Scenario& s = spec.scenarios[0];
  EXPECT_EQ(s.kind, ScenarioKind::assumption);
  ASSERT_NE(s.body[1].wait(), nullptr);
  EXPECT_EQ(to_string(s.body[1].wait()->condition), "b.count >= 2 && b.mode != idle");
  EXPECT_EQ(s.body[0].message()->args.size(), 2u);
}

TEST(ScenarioParser, PrettyPrintRoundTrip) {
  for (const char* name : {"v2x/listing1.sml", "v2x/dynamics.sml"}) {
    ScenarioSpec spec = parse_specification(*v2x::builtin_resource(name));
    std::string printed = pretty_print(spec);
    ScenarioSpec again = parse_specification(printed);
    EXPECT_EQ(again, spec) << name;
    EXPECT_EQ(pretty_print(again), printed) << name;
  }
}

TEST(ScenarioParser, ParsingIsPure) {
  std::string text = listing1_text();
  EXPECT_EQ(parse_specification(text), parse_specification(text));
}

TEST(ScenarioParser, MergeAndStrip) {
  ScenarioSpec full = v2x::full_spec();
  EXPECT_EQ(full.scenarios.size(), 9u);
  EXPECT_THROW(merge(full, v2x::listing1_spec()), Error);
  ScenarioSpec bare = strip_annotations(full);
  for (std::size_t i = 0; i < full.scenarios.size(); ++i) {
    EXPECT_EQ(count_annotations(bare.scenarios[i].body), 0u);
    EXPECT_TRUE(same_shape(bare.scenarios[i], full.scenarios[i]));
  }
}

TEST(ScenarioParser, StepIds) {
  EXPECT_EQ(step_id(std::vector<std::size_t>{1, 0}), "1.0");
  EXPECT_EQ(parse_step_id("2.0.1"), (std::optional<StepPath>(StepPath{2, 0, 1})));
  EXPECT_FALSE(parse_step_id("x").has_value());
  ScenarioSpec spec = v2x::listing1_spec();
  const Step* s = step_at(spec.scenarios[4], std::vector<std::size_t>{1, 0});
  ASSERT_NE(s, nullptr);
  EXPECT_EQ(s->message()->message, "add");
}

TEST(MessagePatterns, ParseAndPrint) {
  MessagePattern p = parse_message_pattern("* -> c1.enteringAllowed()");
  EXPECT_EQ(p.sender, "*");
  EXPECT_EQ(p.receiver, "c1");
  EXPECT_EQ(to_string(p), "* -> c1.enteringAllowed()");
  MessagePattern q = parse_message_pattern("oc -> oc.registeredPriorityVehicles.add(car)");
  EXPECT_EQ(q.collection, std::optional<std::string>("registeredPriorityVehicles"));
  EXPECT_THROW(parse_message_pattern("* -> c1.m()", false), ParseError);
  EXPECT_THROW(parse_message_pattern("a -> b.m() extra"), ParseError);
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

namespace {

std::vector<Diagnostic> check(std::string_view text) {
  static const ObjectSystem world = v2x::fig2_world();
  return validate(parse_specification(text), validation_schema(world));
}

std::vector<Diagnostic> errors_of(const std::vector<Diagnostic>& diags) {
  std::vector<Diagnostic> out;
  for (const auto& d : diags) {
    if (d.severity == Severity::error) out.push_back(d);
  }
  return out;
}

}  // namespace

TEST(Validate, ShippedSpecsAreClean) {
  EXPECT_TRUE(check(listing1_text()).empty());
  EXPECT_TRUE(validate(v2x::full_spec(), validation_schema(v2x::fig2_world())).empty());
}

TEST(Validate, UnknownField) {
  auto d = check(R"(
guarantee scenario S {
  car -> oc.register()
  alternative [oc.unknownField.isEmpty()] {
    requested oc -> car.enteringAllowed()
  }
})");
  ASSERT_EQ(d.size(), 1u);
  EXPECT_NE(d[0].message.find("unknownField"), std::string::npos);
  EXPECT_EQ(d[0].loc.line, 4);
}

TEST(Validate, UnboundRole) {
  auto d = check(R"(
guarantee scenario S {
  car -> oc.register()
  requested oc -> xyz.enteringAllowed()
})");
  ASSERT_EQ(d.size(), 1u);
  EXPECT_NE(d[0].message.find("xyz"), std::string::npos);
}

TEST(Validate, UnknownMessage) {
  auto d = errors_of(check(R"(
guarantee scenario S {
  car -> oc.honk()
})"));
  ASSERT_EQ(d.size(), 1u);
  EXPECT_NE(d[0].message.find("honk"), std::string::npos);
}

TEST(ScenarioParser, DuplicateScenarioNames) {
  ParseError e = parse_error("guarantee scenario S {\n  car -> oc.register()\n}\nguarantee scenario S {\n  car -> oc.register()\n}");
  EXPECT_EQ(e.loc().line, 4);
  EXPECT_NE(std::string(e.what()).find("'S'"), std::string::npos);
}

TEST(Validate, DiagnosticFormat) {
  Diagnostic d{{3, 7}, Severity::error, "unknown attribute 'x'"};
  EXPECT_EQ(format_diagnostic(d, "spec.sml"), "spec.sml:3:7: error: unknown attribute 'x'");
  Diagnostic w{{1, 1}, Severity::warning, "w"};
  EXPECT_EQ(format_diagnostic(w, "f"), "f:1:1: warning: w");
}
