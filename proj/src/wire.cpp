#include "mabex/wire.hpp"

#include "mabex/playout.hpp"

namespace mabex::wire {

namespace {
template <class... F>
struct overloaded : F... {
  using F::operator()...;
};
template <class... F>
overloaded(F...) -> overloaded<F...>;
}  // namespace

Json to_json(const Value& v) {
  return std::visit(overloaded{
                        [](bool b) { return Json(b); },
                        [](std::int64_t i) { return Json(i); },
                        [](const Symbol& s) { return Json(s.name); },
                        [](const std::string& s) { return Json{{"text", s}}; },
                        [](const ObjectRef& o) { return Json{{"ref", o.id}}; },
                        [](const Collection& c) { return Json(c.items); },
                    },
                    v);
}

Value value_from_json(const Json& j) {
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_string()) return Symbol{j.get<std::string>()};
  if (j.is_array()) return Collection{j.get<std::vector<ObjectId>>()};
  if (j.is_object() && j.contains("text")) return j.at("text").get<std::string>();
  if (j.is_object() && j.contains("ref")) return ObjectRef{j.at("ref").get<std::string>()};
  throw Error("cannot decode value " + j.dump());
}

Json to_json(const ObjectSnapshot& s) {
  Json objects = Json::object();
  for (const auto& [id, rec] : s.objects) {
    Json attrs = Json::object();
    for (const auto& [name, value] : rec.attributes) attrs[name] = to_json(value);
    Json cols = Json::object();
    for (const auto& [name, items] : rec.collections) cols[name] = items;
    objects[id] = Json{{"class", rec.class_name},
                       {"realm", std::string(to_string(rec.realm))},
                       {"attributes", attrs},
                       {"collections", cols}};
  }
  return Json{{"objects", objects}};
}

ObjectSnapshot snapshot_from_json(const Json& j) {
  ObjectSnapshot s;
  for (const auto& [id, o] : j.at("objects").items()) {
    ObjectRecord rec;
    rec.class_name = o.at("class").get<std::string>();
    rec.realm = parse_realm(o.at("realm").get<std::string>());
    if (o.contains("attributes")) {
      for (const auto& [name, v] : o.at("attributes").items()) rec.attributes[name] = value_from_json(v);
    }
    if (o.contains("collections")) {
      for (const auto& [name, v] : o.at("collections").items()) {
        rec.collections[name] = v.get<std::vector<ObjectId>>();
      }
    }
    s.objects[id] = std::move(rec);
  }
  return s;
}

Json to_json(const MessagePattern& p) {
  Json j{{"sender", p.sender}, {"receiver", p.receiver}};
  if (p.collection) j["collection"] = *p.collection;
  j["message"] = p.message;
  return j;
}

Json to_json(const Event& e) {
  Json j{{"text", to_string(e)}, {"sender", e.sender}, {"receiver", e.receiver}};
  if (e.collection) j["collection"] = *e.collection;
  j["message"] = e.message;
  Json args = Json::array();
  for (const auto& a : e.args) args.push_back(to_json(a));
  j["args"] = args;
  j["origin"] = std::string(to_string(e.origin));
  return j;
}

Json to_json(const Diagnostic& d) {
  return Json{{"line", d.loc.line},
              {"column", d.loc.column},
              {"severity", d.severity == Severity::error ? "error" : "warning"},
              {"message", d.message}};
}

}  // namespace mabex::wire
