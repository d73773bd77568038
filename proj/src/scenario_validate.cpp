#include <set>
#include <sstream>

#include "mabex/scenario.hpp"

namespace mabex {

std::string format_diagnostic(const Diagnostic& d, std::string_view file) {
  std::ostringstream os;
  os << file << ":" << d.loc.line << ":" << d.loc.column << ": "
     << (d.severity == Severity::error ? "error" : "warning") << ": " << d.message;
  return os.str();
}

Diagnostic to_diagnostic(const ParseError& e) {
  std::string message = e.detail();
  if (!e.expected().empty()) {
    message += " (expected ";
    for (std::size_t i = 0; i < e.expected().size(); ++i) {
      if (i) message += ", ";
      message += "\"" + e.expected()[i] + "\"";
    }
    message += ")";
  }
  return {e.loc(), Severity::error, message};
}

ValidationSchema validation_schema(const ObjectSystem& world) {
  ValidationSchema vs;
  vs.schema = world.schema.get();
  for (const auto& [id, rec] : world.state.objects) vs.static_objects[id] = rec.class_name;
  return vs;
}

namespace {

bool is_collection_op(std::string_view message) {
  return message == "add" || message == "remove" || message == "clear";
}

class ScenarioChecker {
 public:
  ScenarioChecker(const Scenario& s, const ValidationSchema& vs, std::vector<Diagnostic>& out)
      : s_(s), vs_(vs), schema_(*vs.schema), out_(out) {}

  void run() {
    if (s_.body.empty() || !s_.body.front().message()) {
      error(s_.loc, "scenario '" + s_.name + "' must start with a message step");
    }
    for (const auto& role : activation_roles(s_)) bound_.insert(role);
    infer_types();

    for (const auto& b : s_.bindings) check_expr(b.value);
    check_block(s_.body);
    for (const auto& c : s_.constraints) check_pattern(c.pattern, c.loc);
  }

 private:
  void error(SourceLoc loc, std::string message) { out_.push_back({loc, Severity::error, std::move(message)}); }

  bool known_role(const std::string& role) const {
    return bound_.count(role) || vs_.static_objects.count(role);
  }

  std::optional<std::string> role_class(const std::string& role) const {
    if (auto it = types_.find(role); it != types_.end()) return it->second;
    return std::nullopt;
  }

  void infer_types() {
    for (const auto& [id, cls] : vs_.static_objects) {
      if (!bound_.count(id)) types_[id] = cls;
    }
    for (const auto& occ : message_steps(s_)) {
      const MessageStep& m = *occ.step;
      if (m.collection) continue;
      if (const MessageDecl* d = schema_.find_message(m.message)) {
        types_.try_emplace(m.sender, d->sender_class);
        types_.try_emplace(m.receiver, d->receiver_class);
      }
    }
    for (const auto& b : s_.bindings) {
      auto member = std::get_if<MemberExpr>(&b.value.node().kind);
      if (!member) continue;
      auto base = std::get_if<NameExpr>(&member->base.node().kind);
      if (!base) continue;
      std::optional<std::string> cls;
      if (auto it = types_.find(base->name); it != types_.end()) cls = it->second;
      if (!cls) continue;
      if (const AttributeDecl* a = schema_.find_attribute(*cls, member->attribute);
          a && a->type == AttrType::object) {
        types_.try_emplace(b.role, a->object_class);
      }
    }
  }

  void check_role(const std::string& role, SourceLoc loc) {
    if (!known_role(role)) error(loc, "unbound role '" + role + "' in scenario '" + s_.name + "'");
  }

  void check_pattern(const MessagePattern& p, SourceLoc loc) {
    check_role(p.sender, loc);
    check_role(p.receiver, loc);
    if (p.collection) {
      if (!is_collection_op(p.message)) {
        error(loc, "unknown collection operation '" + p.message + "' (expected add, remove or clear)");
      }
      if (auto cls = role_class(p.receiver); cls && !schema_.find_collection(*cls, *p.collection)) {
        error(loc, "unknown collection '" + *p.collection + "' on role '" + p.receiver + "' (" + *cls + ")");
      }
      return;
    }
    const MessageDecl* d = schema_.find_message(p.message);
    if (!d) {
      error(loc, "unknown message '" + p.message + "'");
      return;
    }
    auto conforms = [&](const std::string& role, const std::string& want, const char* side) {
      auto cls = role_class(role);
      if (cls && !schema_.is_a(*cls, want) && !schema_.is_a(want, *cls)) {
        error(loc, "role '" + role + "' (" + *cls + ") cannot be the " + side + " of '" + p.message + "'");
      }
    };
    conforms(p.sender, d->sender_class, "sender");
    conforms(p.receiver, d->receiver_class, "receiver");
  }

  void check_expr(const Expr& e) {
    for (const auto& name : object_names(e)) {
      if (!known_role(name)) error(e.node().loc, "unbound role '" + name + "' in scenario '" + s_.name + "'");
    }
    for_each_member(e, [&](const std::string& base, const std::string& attr, SourceLoc loc) {
      if (base.empty()) return;
      auto cls = role_class(base);
      if (cls && !schema_.has_member_in_hierarchy(*cls, attr)) {
        error(loc, "unknown attribute '" + attr + "' on role '" + base + "' (" + *cls + ")");
      }
    });
    for_each_instance_of(e, [&](const std::string& cls, SourceLoc loc) {
      if (!schema_.find_class(cls)) error(loc, "unknown class '" + cls + "'");
    });
  }

  void check_block(const std::vector<Step>& steps) {
    for (const auto& step : steps) {
      if (const MessageStep* m = step.message()) {
        check_pattern(m->pattern(), m->loc);
        for (const auto& a : m->args) check_expr(a);
      } else if (const AlternativeStep* alt = step.alternative()) {
        check_expr(alt->guard);
        check_block(alt->body);
        for (const auto& c : alt->constraints) check_pattern(c.pattern, c.loc);
      } else if (const WaitStep* w = step.wait()) {
        check_expr(w->condition);
      }
    }
  }

  const Scenario& s_;
  const ValidationSchema& vs_;
  const ObjectSchema& schema_;
  std::vector<Diagnostic>& out_;
  std::set<std::string> bound_;
  std::map<std::string, std::string> types_;
};

}  // namespace

std::vector<Diagnostic> validate(const ScenarioSpec& spec, const ValidationSchema& schema) {
  std::vector<Diagnostic> out;
  if (!schema.schema) {
    out.push_back({{}, Severity::error, "no object schema to validate against"});
    return out;
  }
  for (const auto& s : spec.scenarios) ScenarioChecker(s, schema, out).run();
  return out;
}

}  // namespace mabex
