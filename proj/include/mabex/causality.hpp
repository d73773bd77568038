#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mabex/expr.hpp"
#include "mabex/scenario.hpp"

namespace mabex {

enum class Combinator { any_of, all_of };  // written `or` / `and`
std::string_view to_string(Combinator c);

struct CausalityNode {
  std::string id;
  std::string label;
  Combinator combinator = Combinator::any_of;
  Expr condition;  // empty: no condition (allowed on internal nodes and the root)
  std::string explains;
  std::string monitors;  // optional event name this leaf watches
  std::vector<CausalityNode> children;

  bool is_leaf() const { return children.empty(); }
  // Explanation text, falling back to the label.
  const std::string& fragment() const { return explains.empty() ? label : explains; }
};

struct CausalityTree {
  CausalityNode root;
  // Observable event the tree explains (`observes:` on the root); terms
  // that are not object ids are variables usable in conditions.
  std::optional<MessagePattern> observes;

  std::size_t size() const;
  std::size_t height() const;  // root only = 0
  const CausalityNode* find(std::string_view id) const;
};

class FormatError : public ParseError {
 public:
  using ParseError::ParseError;
};

// Text format (.causes):
//   node <id> {
//     label: "..."  combinator: or|and  condition: "<expr>"
//     explains: "..."  monitors: "<event>"  observes: "<pattern>"
//     node <child> { ... } ...
//   }
CausalityTree load_tree(std::string_view text);
std::string dump_tree(const CausalityTree& tree);

using VariableSnapshot = std::map<std::string, Value>;
using CausePath = std::vector<std::string>;  // node ids from the root

// Node activity: condition (when present) holds, and a leaf needs its
// condition, an `or` node one active child, an `and` node all children.
// Returns every maximal root-to-node path of active nodes, in tree order;
// empty when the root is inactive. Every condition is evaluated, so a
// missing variable is reported even below an inactive node.
std::vector<CausePath> evaluate(const CausalityTree& tree, const EvalContext& ctx);
std::vector<CausePath> evaluate(const CausalityTree& tree, const VariableSnapshot& snapshot);

struct TreeFragment {
  std::string text;
  std::vector<std::string> nodes;  // one id, or the merged children of an `and` node
  std::size_t depth = 0;
};

// Fragments of active nodes from depth 1 to depth_limit in tree order,
// each node once; the children of an active `and` node form one fragment
// joined with "and".
std::vector<TreeFragment> explain_from_tree(const CausalityTree& tree, const EvalContext& ctx, std::size_t depth_limit);
std::vector<TreeFragment> explain_from_tree(const CausalityTree& tree, const VariableSnapshot& snapshot,
                                            std::size_t depth_limit);

}  // namespace mabex
