#include "mabex/object_system.hpp"

#include <algorithm>
#include <cstdio>

#include "mabex/wire.hpp"

namespace mabex {

std::string_view to_string(Realm r) { return r == Realm::environment ? "environment" : "system"; }

Realm parse_realm(std::string_view text) {
  if (text == "environment") return Realm::environment;
  if (text == "system") return Realm::system;
  throw Error("unknown realm '" + std::string(text) + "'");
}

void ObjectSchema::add_class(ClassDecl decl) {
  std::string name = decl.name;
  classes_[name] = std::move(decl);
}

void ObjectSchema::add_message(MessageDecl decl) {
  std::string name = decl.name;
  messages_[name] = std::move(decl);
}

void ObjectSchema::add_effect(AttributeEffect effect) { effects_.push_back(std::move(effect)); }

const ClassDecl* ObjectSchema::find_class(std::string_view name) const {
  auto it = classes_.find(name);
  return it == classes_.end() ? nullptr : &it->second;
}

const MessageDecl* ObjectSchema::find_message(std::string_view name) const {
  auto it = messages_.find(name);
  return it == messages_.end() ? nullptr : &it->second;
}

bool ObjectSchema::is_a(std::string_view cls, std::string_view ancestor) const {
  const ClassDecl* c = find_class(cls);
  // Bounded walk; the class table is tiny and a cycle would be a schema bug.
  for (int depth = 0; c && depth < 64; ++depth) {
    if (c->name == ancestor) return true;
    if (!c->parent) return false;
    c = find_class(*c->parent);
  }
  return false;
}

const AttributeDecl* ObjectSchema::find_attribute(std::string_view cls, std::string_view name) const {
  for (const ClassDecl* c = find_class(cls); c; c = c->parent ? find_class(*c->parent) : nullptr) {
    auto it = c->attributes.find(std::string(name));
    if (it != c->attributes.end()) return &it->second;
  }
  return nullptr;
}

const std::string* ObjectSchema::find_collection(std::string_view cls, std::string_view name) const {
  for (const ClassDecl* c = find_class(cls); c; c = c->parent ? find_class(*c->parent) : nullptr) {
    auto it = c->collections.find(std::string(name));
    if (it != c->collections.end()) return &it->second;
  }
  return nullptr;
}

bool ObjectSchema::has_member_in_hierarchy(std::string_view cls, std::string_view name) const {
  for (const auto& [n, decl] : classes_) {
    if (!is_a(n, cls)) continue;
    if (find_attribute(n, name) || find_collection(n, name)) return true;
  }
  return false;
}

const ObjectRecord* ObjectSnapshot::find(std::string_view id) const {
  auto it = objects.find(std::string(id));
  return it == objects.end() ? nullptr : &it->second;
}

ObjectRecord& ObjectSystem::add_object(const ObjectId& id, const std::string& class_name) {
  const ClassDecl* cls = schema ? schema->find_class(class_name) : nullptr;
  if (!cls) throw EngineError("unknown class '" + class_name + "' for object '" + id + "'");
  if (state.objects.count(id)) throw EngineError("duplicate object id '" + id + "'");
  ObjectRecord& rec = state.objects[id];
  rec.class_name = class_name;
  rec.realm = cls->realm;
  return rec;
}

void ObjectSystem::check_integrity() const {
  if (!schema) throw EngineError("object system has no schema");
  for (const auto& [id, rec] : state.objects) {
    if (!schema->find_class(rec.class_name)) {
      throw EngineError("object '" + id + "' has unknown class '" + rec.class_name + "'");
    }
    for (const auto& [name, value] : rec.attributes) {
      if (!schema->find_attribute(rec.class_name, name)) {
        throw EngineError("object '" + id + "' has undeclared attribute '" + name + "'");
      }
      if (auto ref = std::get_if<ObjectRef>(&value); ref && !state.find(ref->id)) {
        throw EngineError("attribute " + id + "." + name + " references unknown object '" + ref->id + "'");
      }
    }
    for (const auto& [name, items] : rec.collections) {
      if (!schema->find_collection(rec.class_name, name)) {
        throw EngineError("object '" + id + "' has undeclared collection '" + name + "'");
      }
      for (const auto& item : items) {
        if (!state.find(item)) {
          throw EngineError("collection " + id + "." + name + " references unknown object '" + item + "'");
        }
      }
    }
  }
}

Value ObjectContext::resolve(std::string_view name) const {
  if (bindings_) {
    auto it = bindings_->find(std::string(name));
    if (it != bindings_->end()) return ObjectRef{it->second};
  }
  if (snapshot_.find(name)) return ObjectRef{std::string(name)};
  return Symbol{std::string(name)};
}

Value ObjectContext::attribute(const ObjectRef& object, std::string_view name) const {
  const ObjectRecord* rec = snapshot_.find(object.id);
  if (!rec) throw EvalError("unknown object '" + object.id + "'");
  std::string key(name);
  if (auto it = rec->attributes.find(key); it != rec->attributes.end()) return it->second;
  if (auto it = rec->collections.find(key); it != rec->collections.end()) return Collection{it->second};
  if (schema_.find_collection(rec->class_name, name)) return Collection{};
  throw EvalError("object '" + object.id + "' (" + rec->class_name + ") has no attribute '" + key + "'");
}

bool ObjectContext::is_instance_of(const ObjectRef& object, std::string_view class_name) const {
  const ObjectRecord* rec = snapshot_.find(object.id);
  if (!rec) throw EvalError("unknown object '" + object.id + "'");
  if (!schema_.find_class(class_name)) throw EvalError("unknown class '" + std::string(class_name) + "'");
  return schema_.is_a(rec->class_name, class_name);
}

std::string canonical_text(const ObjectSnapshot& s) { return wire::to_json(s).dump(); }

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string snapshot_digest(const ObjectSnapshot& s) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical_text(s))));
  return std::string("fnv1a64:") + buf;
}

}  // namespace mabex
