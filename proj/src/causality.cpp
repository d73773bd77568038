#include "mabex/causality.hpp"

#include <functional>
#include <set>
#include <sstream>

namespace mabex {

std::string_view to_string(Combinator c) { return c == Combinator::any_of ? "or" : "and"; }

namespace {

std::size_t count_nodes(const CausalityNode& n) {
  std::size_t total = 1;
  for (const auto& c : n.children) total += count_nodes(c);
  return total;
}

std::size_t node_height(const CausalityNode& n) {
  std::size_t h = 0;
  for (const auto& c : n.children) h = std::max(h, node_height(c) + 1);
  return h;
}

const CausalityNode* find_node(const CausalityNode& n, std::string_view id) {
  if (n.id == id) return &n;
  for (const auto& c : n.children) {
    if (auto f = find_node(c, id)) return f;
  }
  return nullptr;
}

class TreeParser {
 public:
  explicit TreeParser(std::string_view text) : ts_(lex(text)) {}

  CausalityTree parse() {
    if (ts_.at_end()) fail(ts_.peek().loc, "empty document", {"node"});
    CausalityTree tree;
    tree.root = node(true, tree);
    if (!ts_.at_end()) fail(ts_.peek().loc, "a document has exactly one root node", {"end of input"});
    return tree;
  }

 private:
  static std::vector<Token> lex(std::string_view text) {
    try {
      return tokenize(text);
    } catch (const ParseError& e) {
      throw FormatError(e.loc(), e.detail(), e.expected());
    }
  }

  [[noreturn]] void fail(SourceLoc loc, std::string msg, std::vector<std::string> expected = {}) {
    throw FormatError(loc, std::move(msg), std::move(expected));
  }

  std::string string_value() {
    const Token& t = ts_.peek();
    if (t.kind != TokenKind::string) fail(t.loc, "expected a quoted string, found " + describe(t), {"string"});
    return ts_.next().text;
  }

  CausalityNode node(bool is_root, CausalityTree& tree) {
    const Token& kw = ts_.peek();
    if (!ts_.accept_ident("node")) fail(kw.loc, "unexpected " + describe(kw), {"node"});
    SourceLoc loc = ts_.peek().loc;
    CausalityNode n;
    if (ts_.peek().kind != TokenKind::identifier) fail(loc, "expected node id", {"identifier"});
    n.id = ts_.next().text;
    if (!ids_.insert(n.id).second) fail(loc, "duplicate node id '" + n.id + "'");
    if (!ts_.is_punct("{")) fail(ts_.peek().loc, "unexpected " + describe(ts_.peek()), {"{"});
    ts_.next();
    bool has_combinator = false;
    std::set<std::string> seen;
    for (;;) {
      const Token& t = ts_.peek();
      if (t.kind == TokenKind::end) fail(t.loc, "unexpected end of input", {"}"});
      if (ts_.accept_punct("}")) break;
      if (ts_.is_ident("node")) {
        n.children.push_back(node(false, tree));
        continue;
      }
      if (t.kind != TokenKind::identifier) fail(t.loc, "unexpected " + describe(t), {"field name", "node", "}"});
      SourceLoc key_loc = t.loc;
      std::string key = ts_.next().text;
      if (!seen.insert(key).second) fail(key_loc, "duplicate field '" + key + "'");
      if (!ts_.is_punct(":")) fail(ts_.peek().loc, "unexpected " + describe(ts_.peek()), {":"});
      ts_.next();
      if (key == "label") {
        n.label = string_value();
      } else if (key == "explains") {
        n.explains = string_value();
      } else if (key == "monitors") {
        n.monitors = string_value();
      } else if (key == "combinator") {
        const Token& v = ts_.peek();
        std::string c = v.kind == TokenKind::string || v.kind == TokenKind::identifier ? ts_.next().text : "";
        if (c == "or") {
          n.combinator = Combinator::any_of;
        } else if (c == "and") {
          n.combinator = Combinator::all_of;
        } else {
          fail(v.loc, "unknown combinator '" + (c.empty() ? v.text : c) + "'", {"or", "and"});
        }
        has_combinator = true;
      } else if (key == "condition") {
        SourceLoc vloc = ts_.peek().loc;
        std::string text = string_value();
        try {
          n.condition = parse_expression(text);
        } catch (const ParseError& e) {
          fail(vloc, "bad condition: " + std::string(e.what()));
        }
      } else if (key == "observes") {
        SourceLoc vloc = ts_.peek().loc;
        if (!is_root) fail(key_loc, "'observes' is only allowed on the root node");
        std::string text = string_value();
        try {
          tree.observes = parse_message_pattern(text, true);
        } catch (const ParseError& e) {
          fail(vloc, "bad event pattern: " + std::string(e.what()));
        }
      } else {
        fail(key_loc, "unknown field '" + key + "'",
             {"label", "combinator", "condition", "explains", "monitors", "observes", "node"});
      }
    }
    if (n.children.empty() && n.condition.empty() && !is_root) {
      fail(loc, "leaf node '" + n.id + "' has no condition");
    }
    if (!n.children.empty() && !has_combinator) fail(loc, "internal node '" + n.id + "' has no combinator");
    return n;
  }

  TokenStream ts_;
  std::set<std::string> ids_;
};

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

void dump_node(std::ostringstream& os, const CausalityNode& n, const CausalityTree& tree, int depth) {
  std::string pad(depth * 2, ' ');
  os << pad << "node " << n.id << " {\n";
  if (!n.label.empty()) os << pad << "  label: " << quoted(n.label) << "\n";
  if (!n.children.empty()) os << pad << "  combinator: " << to_string(n.combinator) << "\n";
  if (!n.condition.empty()) os << pad << "  condition: " << quoted(to_string(n.condition)) << "\n";
  if (!n.explains.empty()) os << pad << "  explains: " << quoted(n.explains) << "\n";
  if (!n.monitors.empty()) os << pad << "  monitors: " << quoted(n.monitors) << "\n";
  if (depth == 0 && tree.observes) os << pad << "  observes: " << quoted(to_string(*tree.observes)) << "\n";
  for (const auto& c : n.children) dump_node(os, c, tree, depth + 1);
  os << pad << "}\n";
}

// Activity of every node, keyed by id. All conditions are evaluated.
bool mark(const CausalityNode& n, const EvalContext& ctx, std::map<std::string, bool>& active) {
  std::vector<bool> child;
  for (const auto& c : n.children) child.push_back(mark(c, ctx, active));
  bool cond = n.condition.empty() || evaluate_condition(n.condition, ctx);
  bool ok = cond;
  if (!n.children.empty()) {
    bool any = false, all = true;
    for (bool b : child) {
      any = any || b;
      all = all && b;
    }
    ok = ok && (n.combinator == Combinator::any_of ? any : all);
  } else if (n.condition.empty()) {
    ok = true;  // bare root
  }
  active[n.id] = ok;
  return ok;
}

void collect_paths(const CausalityNode& n, const std::map<std::string, bool>& active, CausePath& prefix,
                   std::vector<CausePath>& out) {
  prefix.push_back(n.id);
  bool extended = false;
  for (const auto& c : n.children) {
    if (!active.at(c.id)) continue;
    extended = true;
    collect_paths(c, active, prefix, out);
  }
  if (!extended) out.push_back(prefix);
  prefix.pop_back();
}

}  // namespace

std::size_t CausalityTree::size() const { return count_nodes(root); }
std::size_t CausalityTree::height() const { return node_height(root); }
const CausalityNode* CausalityTree::find(std::string_view id) const { return find_node(root, id); }

CausalityTree load_tree(std::string_view text) { return TreeParser(text).parse(); }

std::string dump_tree(const CausalityTree& tree) {
  std::ostringstream os;
  dump_node(os, tree.root, tree, 0);
  return os.str();
}

std::vector<CausePath> evaluate(const CausalityTree& tree, const EvalContext& ctx) {
  std::map<std::string, bool> active;
  std::vector<CausePath> out;
  if (!mark(tree.root, ctx, active)) return out;
  CausePath prefix;
  collect_paths(tree.root, active, prefix, out);
  return out;
}

std::vector<CausePath> evaluate(const CausalityTree& tree, const VariableSnapshot& snapshot) {
  return evaluate(tree, VariableContext(snapshot));
}

std::vector<TreeFragment> explain_from_tree(const CausalityTree& tree, const EvalContext& ctx,
                                            std::size_t depth_limit) {
  std::map<std::string, bool> active;
  std::vector<TreeFragment> out;
  if (!mark(tree.root, ctx, active)) return out;
  std::set<std::string> emitted;
  std::function<void(const CausalityNode&, std::size_t)> visit = [&](const CausalityNode& n, std::size_t depth) {
    if (depth >= 1 && depth <= depth_limit && emitted.insert(n.id).second) {
      out.push_back({n.fragment(), {n.id}, depth});
    }
    if (depth + 1 > depth_limit || n.children.empty()) return;
    if (n.combinator == Combinator::all_of && n.children.size() > 1) {
      TreeFragment merged{"", {}, depth + 1};
      for (const auto& c : n.children) {
        if (!merged.text.empty()) merged.text += " and ";
        merged.text += c.fragment();
        merged.nodes.push_back(c.id);
        emitted.insert(c.id);
      }
      out.push_back(std::move(merged));
    }
    for (const auto& c : n.children) {
      if (active.at(c.id)) visit(c, depth + 1);
    }
  };
  visit(tree.root, 0);
  return out;
}

std::vector<TreeFragment> explain_from_tree(const CausalityTree& tree, const VariableSnapshot& snapshot,
                                            std::size_t depth_limit) {
  return explain_from_tree(tree, VariableContext(snapshot), depth_limit);
}

}  // namespace mabex
