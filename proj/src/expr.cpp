#include "mabex/expr.hpp"

#include <algorithm>
#include <optional>
#include <sstream>

namespace mabex {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

Expr wrap(ExprNode node) { return Expr(std::make_shared<const ExprNode>(std::move(node))); }

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

// --- parsing ---------------------------------------------------------------

Expr parse_or(TokenStream& ts);

Expr parse_primary(TokenStream& ts) {
  const Token& t = ts.peek();
  SourceLoc loc = t.loc;
  if (t.kind == TokenKind::integer) {
    auto v = ts.next().number;
    return wrap({LiteralExpr{Value{v}}, loc});
  }
  if (t.kind == TokenKind::string) {
    return wrap({LiteralExpr{Value{ts.next().text}}, loc});
  }
  if (t.kind == TokenKind::identifier) {
    if (t.text == "true" || t.text == "false") {
      bool b = ts.next().text == "true";
      return wrap({LiteralExpr{Value{b}}, loc});
    }
    if (t.text == "instanceOf") ts.fail("unexpected 'instanceOf'", {"expression"});
    return wrap({NameExpr{ts.next().text}, loc});
  }
  if (ts.accept_punct("(")) {
    Expr inner = parse_or(ts);
    ts.expect_punct(")");
    return inner;
  }
  ts.fail("unexpected " + describe(t), {"expression"});
}

Expr parse_postfix(TokenStream& ts) {
  Expr e = parse_primary(ts);
  for (;;) {
    SourceLoc loc = ts.peek().loc;
    if (ts.accept_punct(".")) {
      std::string name = ts.expect_identifier("attribute");
      if (ts.accept_punct("(")) {
        Predicate p;
        if (name == "isEmpty") {
          p = Predicate::is_empty;
        } else if (name == "contains") {
          p = Predicate::contains;
        } else {
          throw ParseError(loc, "unsupported predicate '" + name + "'", {"isEmpty", "contains"});
        }
        std::vector<Expr> args;
        if (!ts.is_punct(")")) {
          do {
            args.push_back(parse_or(ts));
          } while (ts.accept_punct(","));
        }
        ts.expect_punct(")");
        std::size_t want = p == Predicate::is_empty ? 0 : 1;
        if (args.size() != want) {
          throw ParseError(loc, "'" + name + "' takes " + std::to_string(want) + " argument(s)");
        }
        e = wrap({PredicateExpr{e, p, std::move(args)}, loc});
      } else {
        e = wrap({MemberExpr{e, std::move(name)}, loc});
      }
      continue;
    }
    if (ts.accept_ident("instanceOf")) {
      std::string cls = ts.expect_identifier("class name");
      e = wrap({InstanceOfExpr{e, std::move(cls)}, loc});
      continue;
    }
    return e;
  }
}

Expr parse_comparison(TokenStream& ts) {
  Expr lhs = parse_postfix(ts);
  static const std::pair<const char*, BinaryOp> ops[] = {
      {"==", BinaryOp::eq}, {"!=", BinaryOp::ne}, {"<=", BinaryOp::le},
      {">=", BinaryOp::ge}, {"<", BinaryOp::lt},  {">", BinaryOp::gt}};
  for (auto& [text, op] : ops) {
    SourceLoc loc = ts.peek().loc;
    if (ts.accept_punct(text)) {
      Expr rhs = parse_postfix(ts);
      return wrap({BinaryExpr{op, lhs, rhs}, loc});
    }
  }
  return lhs;
}

Expr parse_unary(TokenStream& ts) {
  SourceLoc loc = ts.peek().loc;
  if (ts.accept_punct("!")) return wrap({NotExpr{parse_unary(ts)}, loc});
  return parse_comparison(ts);
}

Expr parse_and(TokenStream& ts) {
  Expr e = parse_unary(ts);
  for (;;) {
    SourceLoc loc = ts.peek().loc;
    if (!ts.accept_punct("&&")) return e;
    e = wrap({BinaryExpr{BinaryOp::logical_and, e, parse_unary(ts)}, loc});
  }
}

Expr parse_or(TokenStream& ts) {
  Expr e = parse_and(ts);
  for (;;) {
    SourceLoc loc = ts.peek().loc;
    if (!ts.accept_punct("||")) return e;
    e = wrap({BinaryExpr{BinaryOp::logical_or, e, parse_and(ts)}, loc});
  }
}

// --- printing --------------------------------------------------------------

int precedence(const Expr& e) {
  return std::visit(overloaded{
                        [](const BinaryExpr& b) {
                          if (b.op == BinaryOp::logical_or) return 1;
                          if (b.op == BinaryOp::logical_and) return 2;
                          return 4;
                        },
                        [](const NotExpr&) { return 3; },
                        [](const auto&) { return 5; },
                    },
                    e.node().kind);
}

const char* op_text(BinaryOp op) {
  switch (op) {
    case BinaryOp::logical_or: return "||";
    case BinaryOp::logical_and: return "&&";
    case BinaryOp::eq: return "==";
    case BinaryOp::ne: return "!=";
    case BinaryOp::lt: return "<";
    case BinaryOp::le: return "<=";
    case BinaryOp::gt: return ">";
    case BinaryOp::ge: return ">=";
  }
  return "?";
}

void print(std::ostream& os, const Expr& e, int min_prec);

void print_child(std::ostream& os, const Expr& e, int min_prec) {
  if (precedence(e) < min_prec) {
    os << "(";
    print(os, e, 0);
    os << ")";
  } else {
    print(os, e, min_prec);
  }
}

void print(std::ostream& os, const Expr& e, int) {
  std::visit(overloaded{
                 [&](const LiteralExpr& l) {
                   if (auto s = std::get_if<std::string>(&l.value)) {
                     os << quote(*s);
                   } else {
                     os << value_to_string(l.value);
                   }
                 },
                 [&](const NameExpr& n) { os << n.name; },
                 [&](const MemberExpr& m) {
                   print_child(os, m.base, 5);
                   os << "." << m.attribute;
                 },
                 [&](const PredicateExpr& p) {
                   print_child(os, p.base, 5);
                   os << (p.predicate == Predicate::is_empty ? ".isEmpty(" : ".contains(");
                   for (std::size_t i = 0; i < p.args.size(); ++i) {
                     if (i) os << ", ";
                     print(os, p.args[i], 0);
                   }
                   os << ")";
                 },
                 [&](const InstanceOfExpr& i) {
                   print_child(os, i.base, 5);
                   os << " instanceOf " << i.class_name;
                 },
                 [&](const NotExpr& n) {
                   os << "!";
                   int p = precedence(n.operand);
                   if (p == 3 || p == 5) {
                     print(os, n.operand, 3);
                   } else {
                     os << "(";
                     print(os, n.operand, 0);
                     os << ")";
                   }
                 },
                 [&](const BinaryExpr& b) {
                   int own = precedence(e);
                   if (own == 4) {
                     print_child(os, b.lhs, 5);
                     os << " " << op_text(b.op) << " ";
                     print_child(os, b.rhs, 5);
                   } else {
                     print_child(os, b.lhs, own);
                     os << " " << op_text(b.op) << " ";
                     print_child(os, b.rhs, own + 1);
                   }
                 },
             },
             e.node().kind);
}

// --- evaluation ------------------------------------------------------------

bool as_bool(const Value& v, const Expr& where) {
  if (auto b = std::get_if<bool>(&v)) return *b;
  throw EvalError("expected boolean but '" + to_string(where) + "' is " +
                  std::string(value_type_name(v)));
}

const Collection& as_collection(const Value& v, const Expr& where) {
  if (auto c = std::get_if<Collection>(&v)) return *c;
  throw EvalError("'" + to_string(where) + "' is not a collection");
}

const ObjectRef& as_object(const Value& v, const Expr& where) {
  if (auto o = std::get_if<ObjectRef>(&v)) return *o;
  throw EvalError("'" + to_string(where) + "' does not denote an object");
}

std::optional<std::string> identity_name(const Value& v) {
  if (auto o = std::get_if<ObjectRef>(&v)) return o->id;
  if (auto s = std::get_if<Symbol>(&v)) return s->name;
  return std::nullopt;
}

bool values_equal(const Value& a, const Value& b, const Expr& where) {
  if (a.index() == b.index()) return a == b;
  auto na = identity_name(a);
  auto nb = identity_name(b);
  if (na && nb) return *na == *nb;
  throw EvalError("cannot compare " + std::string(value_type_name(a)) + " with " +
                  std::string(value_type_name(b)) + " in '" + to_string(where) + "'");
}

std::int64_t as_int(const Value& v, const Expr& where) {
  if (auto i = std::get_if<std::int64_t>(&v)) return *i;
  throw EvalError("expected number in '" + to_string(where) + "'");
}

void collect(const Expr& e, std::set<std::string>& objects, std::set<std::string>& names) {
  std::visit(overloaded{
                 [&](const LiteralExpr&) {},
                 [&](const NameExpr& n) { names.insert(n.name); },
                 [&](const MemberExpr& m) {
                   if (auto n = std::get_if<NameExpr>(&m.base.node().kind)) objects.insert(n->name);
                   collect(m.base, objects, names);
                 },
                 [&](const PredicateExpr& p) {
                   if (auto n = std::get_if<NameExpr>(&p.base.node().kind)) objects.insert(n->name);
                   collect(p.base, objects, names);
                   for (auto& a : p.args) collect(a, objects, names);
                 },
                 [&](const InstanceOfExpr& i) {
                   if (auto n = std::get_if<NameExpr>(&i.base.node().kind)) objects.insert(n->name);
                   collect(i.base, objects, names);
                 },
                 [&](const NotExpr& n) { collect(n.operand, objects, names); },
                 [&](const BinaryExpr& b) {
                   collect(b.lhs, objects, names);
                   collect(b.rhs, objects, names);
                 },
             },
             e.node().kind);
}

void split(const Expr& e, BinaryOp op, std::vector<Expr>& out) {
  if (auto b = std::get_if<BinaryExpr>(&e.node().kind); b && b->op == op) {
    split(b->lhs, op, out);
    split(b->rhs, op, out);
  } else {
    out.push_back(e);
  }
}

}  // namespace

// ---------------------------------------------------------------------------

std::string value_to_string(const Value& v) {
  return std::visit(overloaded{
                        [](bool b) -> std::string { return b ? "true" : "false"; },
                        [](std::int64_t i) { return std::to_string(i); },
                        [](const Symbol& s) { return s.name; },
                        [](const std::string& s) { return s; },
                        [](const ObjectRef& o) { return o.id; },
                        [](const Collection& c) {
                          std::string out = "{";
                          for (std::size_t i = 0; i < c.items.size(); ++i) {
                            if (i) out += ", ";
                            out += c.items[i];
                          }
                          return out + "}";
                        },
                    },
                    v);
}

std::string_view value_type_name(const Value& v) {
  static constexpr std::string_view names[] = {"boolean", "number", "symbol",
                                               "text",    "object", "collection"};
  return names[v.index()];
}

bool operator==(const Expr& a, const Expr& b) {
  if (a.node_ == b.node_) return true;
  if (!a.node_ || !b.node_) return false;
  const auto& ka = a.node_->kind;
  const auto& kb = b.node_->kind;
  if (ka.index() != kb.index()) return false;
  return std::visit(
      overloaded{
          [&](const LiteralExpr& x) { return x.value == std::get<LiteralExpr>(kb).value; },
          [&](const NameExpr& x) { return x.name == std::get<NameExpr>(kb).name; },
          [&](const MemberExpr& x) {
            auto& y = std::get<MemberExpr>(kb);
            return x.attribute == y.attribute && x.base == y.base;
          },
          [&](const PredicateExpr& x) {
            auto& y = std::get<PredicateExpr>(kb);
            return x.predicate == y.predicate && x.base == y.base && x.args == y.args;
          },
          [&](const InstanceOfExpr& x) {
            auto& y = std::get<InstanceOfExpr>(kb);
            return x.class_name == y.class_name && x.base == y.base;
          },
          [&](const NotExpr& x) { return x.operand == std::get<NotExpr>(kb).operand; },
          [&](const BinaryExpr& x) {
            auto& y = std::get<BinaryExpr>(kb);
            return x.op == y.op && x.lhs == y.lhs && x.rhs == y.rhs;
          },
      },
      ka);
}

Expr make_literal(Value v) { return wrap({LiteralExpr{std::move(v)}, {}}); }
Expr make_name(std::string name) { return wrap({NameExpr{std::move(name)}, {}}); }
Expr make_member(Expr base, std::string attribute) {
  return wrap({MemberExpr{std::move(base), std::move(attribute)}, {}});
}
Expr make_predicate(Expr base, Predicate p, std::vector<Expr> args) {
  return wrap({PredicateExpr{std::move(base), p, std::move(args)}, {}});
}
Expr make_instance_of(Expr base, std::string class_name) {
  return wrap({InstanceOfExpr{std::move(base), std::move(class_name)}, {}});
}
Expr make_not(Expr operand) { return wrap({NotExpr{std::move(operand)}, {}}); }
Expr make_binary(BinaryOp op, Expr lhs, Expr rhs) {
  return wrap({BinaryExpr{op, std::move(lhs), std::move(rhs)}, {}});
}

Expr parse_expression(TokenStream& ts) { return parse_or(ts); }

Expr parse_expression(std::string_view text) {
  TokenStream ts(tokenize(text));
  Expr e = parse_or(ts);
  if (!ts.at_end()) ts.fail("unexpected " + describe(ts.peek()), {"end of input"});
  return e;
}

std::string to_string(const Expr& e) {
  if (e.empty()) return "";
  std::ostringstream os;
  print(os, e, 0);
  return os.str();
}

Value evaluate(const Expr& e, const EvalContext& ctx) {
  return std::visit(
      overloaded{
          [&](const LiteralExpr& l) -> Value { return l.value; },
          [&](const NameExpr& n) -> Value { return ctx.resolve(n.name); },
          [&](const MemberExpr& m) -> Value {
            return ctx.attribute(as_object(evaluate(m.base, ctx), m.base), m.attribute);
          },
          [&](const PredicateExpr& p) -> Value {
            Value base = evaluate(p.base, ctx);
            const Collection& c = as_collection(base, p.base);
            if (p.predicate == Predicate::is_empty) return c.items.empty();
            Value needle = evaluate(p.args.at(0), ctx);
            auto name = identity_name(needle);
            if (!name) throw EvalError("contains() expects an object in '" + to_string(e) + "'");
            return std::find(c.items.begin(), c.items.end(), *name) != c.items.end();
          },
          [&](const InstanceOfExpr& i) -> Value {
            return ctx.is_instance_of(as_object(evaluate(i.base, ctx), i.base), i.class_name);
          },
          [&](const NotExpr& n) -> Value { return !as_bool(evaluate(n.operand, ctx), n.operand); },
          [&](const BinaryExpr& b) -> Value {
            Value l = evaluate(b.lhs, ctx);
            Value r = evaluate(b.rhs, ctx);
            switch (b.op) {
              // Both operands are always evaluated so a broken right-hand side
              // cannot hide behind a short circuit.
              case BinaryOp::logical_or: {
                bool x = as_bool(l, b.lhs);
                bool y = as_bool(r, b.rhs);
                return x || y;
              }
              case BinaryOp::logical_and: {
                bool x = as_bool(l, b.lhs);
                bool y = as_bool(r, b.rhs);
                return x && y;
              }
              case BinaryOp::eq: return values_equal(l, r, e);
              case BinaryOp::ne: return !values_equal(l, r, e);
              case BinaryOp::lt: return as_int(l, b.lhs) < as_int(r, b.rhs);
              case BinaryOp::le: return as_int(l, b.lhs) <= as_int(r, b.rhs);
              case BinaryOp::gt: return as_int(l, b.lhs) > as_int(r, b.rhs);
              case BinaryOp::ge: return as_int(l, b.lhs) >= as_int(r, b.rhs);
            }
            throw EvalError("bad operator");
          },
      },
      e.node().kind);
}

bool evaluate_condition(const Expr& e, const EvalContext& ctx) { return as_bool(evaluate(e, ctx), e); }

std::vector<Expr> conjuncts(const Expr& e) {
  std::vector<Expr> out;
  split(e, BinaryOp::logical_and, out);
  return out;
}

std::vector<Expr> disjuncts(const Expr& e) {
  std::vector<Expr> out;
  split(e, BinaryOp::logical_or, out);
  return out;
}

Expr substitute_names(const Expr& e, const std::map<std::string, std::string>& rename) {
  const ExprNode& n = e.node();
  return std::visit(
      overloaded{
          [&](const LiteralExpr&) { return e; },
          [&](const NameExpr& x) {
            auto it = rename.find(x.name);
            return it == rename.end() ? e : wrap({NameExpr{it->second}, n.loc});
          },
          [&](const MemberExpr& x) {
            return wrap({MemberExpr{substitute_names(x.base, rename), x.attribute}, n.loc});
          },
          [&](const PredicateExpr& x) {
            std::vector<Expr> args;
            for (auto& a : x.args) args.push_back(substitute_names(a, rename));
            return wrap({PredicateExpr{substitute_names(x.base, rename), x.predicate, std::move(args)},
                         n.loc});
          },
          [&](const InstanceOfExpr& x) {
            return wrap({InstanceOfExpr{substitute_names(x.base, rename), x.class_name}, n.loc});
          },
          [&](const NotExpr& x) { return wrap({NotExpr{substitute_names(x.operand, rename)}, n.loc}); },
          [&](const BinaryExpr& x) {
            return wrap({BinaryExpr{x.op, substitute_names(x.lhs, rename),
                                    substitute_names(x.rhs, rename)},
                         n.loc});
          },
      },
      n.kind);
}

std::set<std::string> object_names(const Expr& e) {
  std::set<std::string> objects, names;
  collect(e, objects, names);
  return objects;
}

std::set<std::string> all_names(const Expr& e) {
  std::set<std::string> objects, names;
  collect(e, objects, names);
  return names;
}

void for_each_member(const Expr& e,
                     const std::function<void(const std::string&, const std::string&, SourceLoc)>& fn) {
  const ExprNode& n = e.node();
  std::visit(overloaded{
                 [&](const LiteralExpr&) {},
                 [&](const NameExpr&) {},
                 [&](const MemberExpr& m) {
                   auto base = std::get_if<NameExpr>(&m.base.node().kind);
                   fn(base ? base->name : std::string(), m.attribute, n.loc);
                   for_each_member(m.base, fn);
                 },
                 [&](const PredicateExpr& p) {
                   for_each_member(p.base, fn);
                   for (auto& a : p.args) for_each_member(a, fn);
                 },
                 [&](const InstanceOfExpr& i) { for_each_member(i.base, fn); },
                 [&](const NotExpr& x) { for_each_member(x.operand, fn); },
                 [&](const BinaryExpr& b) {
                   for_each_member(b.lhs, fn);
                   for_each_member(b.rhs, fn);
                 },
             },
             n.kind);
}

void for_each_instance_of(const Expr& e, const std::function<void(const std::string&, SourceLoc)>& fn) {
  const ExprNode& n = e.node();
  std::visit(overloaded{
                 [&](const LiteralExpr&) {},
                 [&](const NameExpr&) {},
                 [&](const MemberExpr& m) { for_each_instance_of(m.base, fn); },
                 [&](const PredicateExpr& p) {
                   for_each_instance_of(p.base, fn);
                   for (auto& a : p.args) for_each_instance_of(a, fn);
                 },
                 [&](const InstanceOfExpr& i) {
                   fn(i.class_name, n.loc);
                   for_each_instance_of(i.base, fn);
                 },
                 [&](const NotExpr& x) { for_each_instance_of(x.operand, fn); },
                 [&](const BinaryExpr& b) {
                   for_each_instance_of(b.lhs, fn);
                   for_each_instance_of(b.rhs, fn);
                 },
             },
             n.kind);
}

Value VariableContext::resolve(std::string_view name) const {
  auto it = vars_.find(std::string(name));
  if (it == vars_.end()) throw EvalError("missing variable '" + std::string(name) + "'");
  return it->second;
}

Value VariableContext::attribute(const ObjectRef& object, std::string_view name) const {
  throw EvalError("variable snapshot has no object '" + object.id + "' for attribute '" +
                  std::string(name) + "'");
}

bool VariableContext::is_instance_of(const ObjectRef& object, std::string_view) const {
  throw EvalError("variable snapshot has no object '" + object.id + "'");
}

}  // namespace mabex
