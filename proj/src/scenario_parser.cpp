#include <algorithm>
#include <set>
#include <sstream>

#include "mabex/scenario.hpp"

namespace mabex {

std::string_view to_string(ScenarioKind k) { return k == ScenarioKind::guarantee ? "guarantee" : "assumption"; }

std::string_view to_string(Urgency u) {
  switch (u) {
    case Urgency::none: return "none";
    case Urgency::requested: return "requested";
    case Urgency::committed: return "committed";
  }
  return "none";
}

std::string_view to_string(ConstraintKind k) { return k == ConstraintKind::forbidden ? "forbidden" : "interrupt"; }

std::string to_string(const MessagePattern& p) {
  std::string out = p.sender + " -> " + p.receiver;
  if (p.collection) out += "." + *p.collection;
  return out + "." + p.message + "()";
}

const std::optional<std::string>& Step::annotation() const {
  return std::visit([](const auto& s) -> const std::optional<std::string>& { return s.annotation; }, kind);
}

SourceLoc Step::loc() const {
  return std::visit([](const auto& s) { return s.loc; }, kind);
}

const Scenario* ScenarioSpec::find(std::string_view name) const {
  for (const auto& s : scenarios) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

std::optional<std::size_t> ScenarioSpec::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    if (scenarios[i].name == name) return i;
  }
  return std::nullopt;
}

std::string step_id(std::span<const std::size_t> path) {
  std::string out;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i) out += ".";
    out += std::to_string(path[i]);
  }
  return out;
}

std::optional<StepPath> parse_step_id(std::string_view id) {
  StepPath path;
  std::size_t start = 0;
  if (id.empty()) return std::nullopt;
  while (start <= id.size()) {
    std::size_t dot = id.find('.', start);
    std::string_view part = id.substr(start, dot == std::string_view::npos ? std::string_view::npos : dot - start);
    if (part.empty() || !std::all_of(part.begin(), part.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      return std::nullopt;
    }
    path.push_back(std::stoul(std::string(part)));
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  return path;
}

const Step* step_at(const Scenario& s, std::span<const std::size_t> path) {
  const std::vector<Step>* block = &s.body;
  const Step* step = nullptr;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (path[i] >= block->size()) return nullptr;
    step = &(*block)[path[i]];
    if (i + 1 < path.size()) {
      const AlternativeStep* alt = step->alternative();
      if (!alt) return nullptr;
      block = &alt->body;
    }
  }
  return step;
}

namespace {

void collect_messages(const std::vector<Step>& block, StepPath& prefix, std::vector<MessageOccurrence>& out) {
  for (std::size_t i = 0; i < block.size(); ++i) {
    prefix.push_back(i);
    if (const MessageStep* m = block[i].message()) {
      out.push_back({prefix, m});
    } else if (const AlternativeStep* a = block[i].alternative()) {
      collect_messages(a->body, prefix, out);
    }
    prefix.pop_back();
  }
}

// --- parser ------------------------------------------------------------------

class SpecParser {
 public:
  explicit SpecParser(std::string_view text) : ts_(tokenize(text)) {}

  ScenarioSpec parse() {
    ScenarioSpec spec;
    std::set<std::string> names;
    while (!ts_.at_end()) {
      if (ts_.peek().kind == TokenKind::annotation) {
        ts_.fail("@EX annotation is not attached to a step", {"guarantee", "assumption"});
      }
      Scenario s = parse_scenario();
      if (!names.insert(s.name).second) {
        throw ParseError(s.loc, "duplicate scenario name '" + s.name + "'");
      }
      spec.scenarios.push_back(std::move(s));
    }
    return spec;
  }

 private:
  Scenario parse_scenario() {
    Scenario s;
    s.loc = ts_.peek().loc;
    if (ts_.accept_ident("guarantee")) {
      s.kind = ScenarioKind::guarantee;
    } else if (ts_.accept_ident("assumption")) {
      s.kind = ScenarioKind::assumption;
    } else {
      ts_.fail("unexpected " + describe(ts_.peek()), {"guarantee", "assumption"});
    }
    if (!ts_.accept_ident("scenario")) ts_.fail("unexpected " + describe(ts_.peek()), {"scenario"});
    s.name = ts_.expect_identifier("scenario name");
    if (ts_.accept_ident("bindings")) {
      ts_.expect_punct("[");
      while (!ts_.accept_punct("]")) {
        if (ts_.at_end()) ts_.fail("unexpected end of input", {"]"});
        Binding b;
        b.loc = ts_.peek().loc;
        b.role = ts_.expect_identifier("role name");
        ts_.expect_punct("=");
        b.value = parse_expression(ts_);
        if (!is_path(b.value)) throw ParseError(b.loc, "binding value must be an attribute path");
        s.bindings.push_back(std::move(b));
        ts_.accept_punct(",");
      }
    }
    s.body = parse_block();
    if (ts_.accept_ident("constraints")) s.constraints = parse_constraints();
    return s;
  }

  static bool is_path(const Expr& e) {
    if (std::holds_alternative<NameExpr>(e.node().kind)) return true;
    if (auto m = std::get_if<MemberExpr>(&e.node().kind)) return is_path(m->base);
    return false;
  }

  std::vector<Step> parse_block() {
    ts_.expect_punct("{");
    std::vector<Step> steps;
    for (;;) {
      if (ts_.accept_punct("}")) return steps;
      if (ts_.at_end()) ts_.fail("unexpected end of input", {"}"});
      steps.push_back(parse_step());
    }
  }

  std::vector<Constraint> parse_constraints() {
    ts_.expect_punct("[");
    std::vector<Constraint> out;
    for (;;) {
      if (ts_.accept_punct("]")) return out;
      if (ts_.at_end()) ts_.fail("unexpected end of input", {"]"});
      Constraint c;
      c.loc = ts_.peek().loc;
      if (ts_.accept_ident("forbidden")) {
        c.kind = ConstraintKind::forbidden;
      } else if (ts_.accept_ident("interrupt")) {
        c.kind = ConstraintKind::interrupt;
      } else {
        ts_.fail("unknown constraint " + describe(ts_.peek()), {"forbidden", "interrupt", "]"});
      }
      c.pattern = parse_message_pattern(ts_, false);
      out.push_back(std::move(c));
      ts_.accept_punct(",");
    }
  }

  Step parse_step() {
    std::optional<std::string> annotation;
    if (ts_.peek().kind == TokenKind::annotation) {
      annotation = ts_.next().text;
      if (ts_.peek().kind == TokenKind::annotation) {
        ts_.fail("a step carries at most one @EX annotation");
      }
      if (ts_.is_punct("}") || ts_.at_end()) {
        ts_.fail("@EX annotation is not followed by a step", {"step"});
      }
    }
    SourceLoc loc = ts_.peek().loc;
    if (ts_.accept_ident("alternative")) {
      AlternativeStep alt;
      alt.loc = loc;
      alt.annotation = std::move(annotation);
      ts_.expect_punct("[");
      alt.guard = parse_expression(ts_);
      ts_.expect_punct("]");
      alt.body = parse_block();
      if (ts_.accept_ident("constraints")) alt.constraints = parse_constraints();
      return Step{std::move(alt)};
    }
    if (ts_.accept_ident("wait")) {
      WaitStep w;
      w.loc = loc;
      w.annotation = std::move(annotation);
      ts_.expect_punct("[");
      w.condition = parse_expression(ts_);
      ts_.expect_punct("]");
      return Step{std::move(w)};
    }

    MessageStep m;
    m.loc = loc;
    m.annotation = std::move(annotation);
    bool seen_urgency = false;
    while (ts_.peek().kind == TokenKind::identifier && ts_.peek(1).kind == TokenKind::identifier) {
      Token word = ts_.next();
      if (word.text == "strict") {
        if (m.strict) throw ParseError(word.loc, "duplicate 'strict'");
        m.strict = true;
      } else if (word.text == "requested" || word.text == "committed") {
        if (seen_urgency) throw ParseError(word.loc, "conflicting urgency '" + word.text + "'");
        seen_urgency = true;
        m.urgency = word.text == "requested" ? Urgency::requested : Urgency::committed;
      } else {
        throw ParseError(word.loc, "unknown modality keyword '" + word.text + "'",
                         {"strict", "requested", "committed"});
      }
    }
    MessagePattern p = parse_message_pattern(ts_, false, &m.args);
    m.sender = std::move(p.sender);
    m.receiver = std::move(p.receiver);
    m.collection = std::move(p.collection);
    m.message = std::move(p.message);
    return Step{std::move(m)};
  }

  TokenStream ts_;
};

// --- printer -----------------------------------------------------------------

void indent(std::ostringstream& os, int depth) {
  for (int i = 0; i < depth; ++i) os << "    ";
}

void print_constraints(std::ostringstream& os, const std::vector<Constraint>& cs, int depth) {
  os << " constraints [\n";
  for (const auto& c : cs) {
    indent(os, depth + 1);
    os << to_string(c.kind) << " " << to_string(c.pattern) << "\n";
  }
  indent(os, depth);
  os << "]";
}

void print_block(std::ostringstream& os, const std::vector<Step>& steps, int depth) {
  for (const auto& step : steps) {
    if (const auto& a = step.annotation()) {
      indent(os, depth);
      os << "// @EX: " << *a << "\n";
    }
    indent(os, depth);
    if (const MessageStep* m = step.message()) {
      if (m->strict) os << "strict ";
      if (m->urgency != Urgency::none) os << to_string(m->urgency) << " ";
      os << m->sender << " -> " << m->receiver;
      if (m->collection) os << "." << *m->collection;
      os << "." << m->message << "(";
      for (std::size_t i = 0; i < m->args.size(); ++i) {
        if (i) os << ", ";
        os << to_string(m->args[i]);
      }
      os << ")\n";
    } else if (const AlternativeStep* alt = step.alternative()) {
      os << "alternative [" << to_string(alt->guard) << "] {\n";
      print_block(os, alt->body, depth + 1);
      indent(os, depth);
      os << "}";
      if (!alt->constraints.empty()) print_constraints(os, alt->constraints, depth);
      os << "\n";
    } else if (const WaitStep* w = step.wait()) {
      os << "wait [" << to_string(w->condition) << "]\n";
    }
  }
}

}  // namespace

std::vector<MessageOccurrence> message_steps(const Scenario& s) {
  std::vector<MessageOccurrence> out;
  StepPath prefix;
  collect_messages(s.body, prefix, out);
  return out;
}

std::vector<std::string> activation_roles(const Scenario& s) {
  std::vector<std::string> roles;
  if (!s.body.empty()) {
    if (const MessageStep* first = s.body.front().message()) {
      roles.push_back(first->sender);
      if (first->receiver != first->sender) roles.push_back(first->receiver);
    }
  }
  for (const auto& b : s.bindings) {
    if (std::find(roles.begin(), roles.end(), b.role) == roles.end()) roles.push_back(b.role);
  }
  return roles;
}

ScenarioSpec parse_specification(std::string_view text) { return SpecParser(text).parse(); }

MessagePattern parse_message_pattern(TokenStream& ts, bool allow_wildcards, std::vector<Expr>* args) {
  auto term = [&](std::string_view what) {
    if (allow_wildcards && ts.accept_punct("*")) return std::string("*");
    return ts.expect_identifier(what);
  };
  MessagePattern p;
  p.sender = term("sender role");
  ts.expect_punct("->");
  p.receiver = term("receiver role");
  ts.expect_punct(".");
  std::vector<std::string> names;
  do {
    names.push_back(ts.expect_identifier("message name"));
  } while (ts.accept_punct("."));
  if (names.size() > 2) ts.fail("nested collection paths are not supported");
  p.message = names.back();
  if (names.size() == 2) p.collection = names.front();
  ts.expect_punct("(");
  if (!ts.is_punct(")")) {
    do {
      Expr a = parse_expression(ts);
      if (args) args->push_back(std::move(a));
    } while (ts.accept_punct(","));
  }
  ts.expect_punct(")");
  return p;
}

MessagePattern parse_message_pattern(std::string_view text, bool allow_wildcards) {
  TokenStream ts(tokenize(text));
  MessagePattern p = parse_message_pattern(ts, allow_wildcards);
  if (!ts.at_end()) ts.fail("unexpected " + describe(ts.peek()), {"end of input"});
  return p;
}

std::string pretty_print(const ScenarioSpec& spec) {
  std::ostringstream os;
  for (std::size_t i = 0; i < spec.scenarios.size(); ++i) {
    const Scenario& s = spec.scenarios[i];
    if (i) os << "\n";
    os << to_string(s.kind) << " scenario " << s.name;
    if (!s.bindings.empty()) {
      os << " bindings [";
      for (std::size_t b = 0; b < s.bindings.size(); ++b) {
        if (b) os << ", ";
        os << s.bindings[b].role << " = " << to_string(s.bindings[b].value);
      }
      os << "]";
    }
    os << " {\n";
    print_block(os, s.body, 1);
    os << "}";
    if (!s.constraints.empty()) print_constraints(os, s.constraints, 0);
    os << "\n";
  }
  return os.str();
}

ScenarioSpec merge(const ScenarioSpec& a, const ScenarioSpec& b) {
  ScenarioSpec out = a;
  for (const auto& s : b.scenarios) {
    if (out.find(s.name)) throw Error("duplicate scenario name '" + s.name + "' when merging specifications");
    out.scenarios.push_back(s);
  }
  return out;
}

namespace {

void strip_block(std::vector<Step>& steps) {
  for (auto& step : steps) {
    std::visit([](auto& s) { s.annotation.reset(); }, step.kind);
    if (auto* alt = std::get_if<AlternativeStep>(&step.kind)) strip_block(alt->body);
  }
}

}  // namespace

ScenarioSpec strip_annotations(const ScenarioSpec& spec) {
  ScenarioSpec out = spec;
  for (auto& s : out.scenarios) strip_block(s.body);
  return out;
}

bool same_shape(const Scenario& a, const Scenario& b) {
  Scenario x = a, y = b;
  strip_block(x.body);
  strip_block(y.body);
  return x == y;
}

}  // namespace mabex
