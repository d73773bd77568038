#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mabex/expr.hpp"

namespace mabex {

enum class Realm { environment, system };

std::string_view to_string(Realm r);
Realm parse_realm(std::string_view text);

enum class AttrType { boolean, number, symbol, text, object };

struct AttributeDecl {
  AttrType type = AttrType::symbol;
  std::string object_class;  // for AttrType::object
};

struct ClassDecl {
  std::string name;
  std::optional<std::string> parent;
  Realm realm = Realm::system;
  std::map<std::string, AttributeDecl> attributes;
  std::map<std::string, std::string> collections;  // name -> element class
};

struct MessageDecl {
  std::string name;
  std::string sender_class;
  std::string receiver_class;
};

// Attribute update applied whenever an event carrying `message` executes
// (environment dynamics such as a car's position tag).
struct AttributeEffect {
  enum class Target { sender, receiver };
  std::string message;
  Target target = Target::sender;
  std::string attribute;
  Value value;
};

// Class table, message signatures and effects for one kind of world.
// Single inheritance: `is_a` walks the parent chain.
class ObjectSchema {
 public:
  void add_class(ClassDecl decl);
  void add_message(MessageDecl decl);
  void add_effect(AttributeEffect effect);

  const ClassDecl* find_class(std::string_view name) const;
  const MessageDecl* find_message(std::string_view name) const;
  bool is_a(std::string_view cls, std::string_view ancestor) const;

  // Attribute / collection lookup through the inheritance chain.
  const AttributeDecl* find_attribute(std::string_view cls, std::string_view name) const;
  const std::string* find_collection(std::string_view cls, std::string_view name) const;
  // True when `cls` or any subclass declares the attribute or collection.
  bool has_member_in_hierarchy(std::string_view cls, std::string_view name) const;

  const std::map<std::string, ClassDecl, std::less<>>& classes() const { return classes_; }
  const std::vector<AttributeEffect>& effects() const { return effects_; }

 private:
  std::map<std::string, ClassDecl, std::less<>> classes_;
  std::map<std::string, MessageDecl, std::less<>> messages_;
  std::vector<AttributeEffect> effects_;
};

struct ObjectRecord {
  std::string class_name;
  Realm realm = Realm::system;
  std::map<std::string, Value> attributes;
  std::map<std::string, std::vector<ObjectId>> collections;

  friend bool operator==(const ObjectRecord&, const ObjectRecord&) = default;
};

// Plain object state: what a history entry freezes.
struct ObjectSnapshot {
  std::map<ObjectId, ObjectRecord> objects;

  const ObjectRecord* find(std::string_view id) const;
  friend bool operator==(const ObjectSnapshot&, const ObjectSnapshot&) = default;
};

// A world: schema plus current object state.
struct ObjectSystem {
  std::shared_ptr<const ObjectSchema> schema;
  ObjectSnapshot state;

  // Adds an object whose realm is taken from its class.
  ObjectRecord& add_object(const ObjectId& id, const std::string& class_name);

  // Throws EngineError on dangling references, unknown classes, or
  // attributes/collections the class does not declare.
  void check_integrity() const;
};

// Evaluation over a snapshot. Names resolve to role bindings first, then to
// object ids present in the snapshot, else to symbols.
class ObjectContext : public EvalContext {
 public:
  ObjectContext(const ObjectSchema& schema, const ObjectSnapshot& snapshot,
                const std::map<std::string, ObjectId>* bindings = nullptr)
      : schema_(schema), snapshot_(snapshot), bindings_(bindings) {}

  Value resolve(std::string_view name) const override;
  Value attribute(const ObjectRef& object, std::string_view name) const override;
  bool is_instance_of(const ObjectRef& object, std::string_view class_name) const override;

 private:
  const ObjectSchema& schema_;
  const ObjectSnapshot& snapshot_;
  const std::map<std::string, ObjectId>* bindings_;
};

// Canonical single-line JSON text of a snapshot, and its FNV-1a digest.
std::string canonical_text(const ObjectSnapshot& s);
std::uint64_t fnv1a64(std::string_view bytes);
std::string snapshot_digest(const ObjectSnapshot& s);

}  // namespace mabex
