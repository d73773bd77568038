#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mabex/error.hpp"
#include "mabex/lexer.hpp"

namespace mabex {

using ObjectId = std::string;

// An enumeration literal such as `L1` or a position tag.
struct Symbol {
  std::string name;
  friend auto operator<=>(const Symbol&, const Symbol&) = default;
};

struct ObjectRef {
  ObjectId id;
  friend auto operator<=>(const ObjectRef&, const ObjectRef&) = default;
};

// Ordered membership list of object ids (collections keep insertion order).
struct Collection {
  std::vector<ObjectId> items;
  friend auto operator<=>(const Collection&, const Collection&) = default;
};

using Value = std::variant<bool, std::int64_t, Symbol, std::string, ObjectRef, Collection>;

std::string value_to_string(const Value& v);
std::string_view value_type_name(const Value& v);

// ---------------------------------------------------------------------------
// Boolean / value expressions
// ---------------------------------------------------------------------------

enum class BinaryOp { logical_or, logical_and, eq, ne, lt, le, gt, ge };
enum class Predicate { is_empty, contains };

struct ExprNode;

// Immutable expression handle; copies share the tree.
class Expr {
 public:
  Expr() = default;
  explicit Expr(std::shared_ptr<const ExprNode> node) : node_(std::move(node)) {}

  const ExprNode& node() const { return *node_; }
  bool empty() const { return !node_; }

  friend bool operator==(const Expr& a, const Expr& b);

 private:
  std::shared_ptr<const ExprNode> node_;
};

struct LiteralExpr {
  Value value;
};
// Bare identifier: a role, a static object, a snapshot variable, or a symbol.
struct NameExpr {
  std::string name;
};
struct MemberExpr {
  Expr base;
  std::string attribute;
};
struct PredicateExpr {
  Expr base;
  Predicate predicate;
  std::vector<Expr> args;
};
struct InstanceOfExpr {
  Expr base;
  std::string class_name;
};
struct NotExpr {
  Expr operand;
};
struct BinaryExpr {
  BinaryOp op;
  Expr lhs;
  Expr rhs;
};

struct ExprNode {
  std::variant<LiteralExpr, NameExpr, MemberExpr, PredicateExpr, InstanceOfExpr, NotExpr, BinaryExpr>
      kind;
  SourceLoc loc;
};

Expr make_literal(Value v);
Expr make_name(std::string name);
Expr make_member(Expr base, std::string attribute);
Expr make_predicate(Expr base, Predicate p, std::vector<Expr> args = {});
Expr make_instance_of(Expr base, std::string class_name);
Expr make_not(Expr operand);
Expr make_binary(BinaryOp op, Expr lhs, Expr rhs);

// Parses one expression from the stream (stops at the first token that
// cannot continue it).
Expr parse_expression(TokenStream& ts);
// Parses a complete expression; trailing tokens are an error.
Expr parse_expression(std::string_view text);

// Canonical text with minimal parentheses; reparses to an equal tree.
std::string to_string(const Expr& e);

// Resolves names and attributes during evaluation. Implementations throw
// EvalError for anything they cannot resolve.
class EvalContext {
 public:
  virtual ~EvalContext() = default;
  virtual Value resolve(std::string_view name) const = 0;
  virtual Value attribute(const ObjectRef& object, std::string_view name) const = 0;
  virtual bool is_instance_of(const ObjectRef& object, std::string_view class_name) const = 0;
};

Value evaluate(const Expr& e, const EvalContext& ctx);
// Evaluates and requires a boolean result.
bool evaluate_condition(const Expr& e, const EvalContext& ctx);

// Top-level conjunct / disjunct splits (a single non-matching node yields itself).
std::vector<Expr> conjuncts(const Expr& e);
std::vector<Expr> disjuncts(const Expr& e);

// Replaces bare names according to `rename` (used to ground role names).
Expr substitute_names(const Expr& e, const std::map<std::string, std::string>& rename);

// Names used as the base of a member access, predicate or instanceOf.
std::set<std::string> object_names(const Expr& e);
// Every bare name occurring anywhere in the expression.
std::set<std::string> all_names(const Expr& e);

// Visits every MemberExpr as (base name or "", attribute, loc).
void for_each_member(const Expr& e,
                     const std::function<void(const std::string& base, const std::string& attribute,
                                              SourceLoc loc)>& fn);
void for_each_instance_of(const Expr& e, const std::function<void(const std::string& cls, SourceLoc)>& fn);

// Evaluation context over a flat variable map (causality-tree snapshots).
class VariableContext : public EvalContext {
 public:
  explicit VariableContext(const std::map<std::string, Value>& vars) : vars_(vars) {}
  Value resolve(std::string_view name) const override;
  Value attribute(const ObjectRef& object, std::string_view name) const override;
  bool is_instance_of(const ObjectRef& object, std::string_view class_name) const override;

 private:
  const std::map<std::string, Value>& vars_;
};

}  // namespace mabex
