#include "mabex/v2x.hpp"

#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

namespace mabex::v2x {

// Generated from data/ at build time.
extern const std::map<std::string, std::string_view>& embedded_resources();

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::shared_ptr<const ObjectSchema> make_schema() {
  auto s = std::make_shared<ObjectSchema>();
  s->add_class({"Sensor", std::nullopt, Realm::environment, {}, {}});
  s->add_class({"Car",
                std::nullopt,
                Realm::environment,
                {{"direction", {AttrType::symbol, ""}},
                 {"position", {AttrType::symbol, ""}},
                 {"registered", {AttrType::boolean, ""}}},
                {}});
  s->add_class({"EmergencyVehicle", std::string("Car"), Realm::environment, {}, {}});
  s->add_class({"ObstacleController",
                std::nullopt,
                Realm::system,
                {},
                {{"passingL1", "Car"}, {"passingL2", "Car"}, {"registeredPriorityVehicles", "Car"}}});
  s->add_class({"CoordinationPlatform",
                std::nullopt,
                Realm::system,
                {{"obstacleCtrl", {AttrType::object, "ObstacleController"}}},
                {}});

  s->add_message({"approachingObstacle", "Sensor", "Car"});
  s->add_message({"register", "Car", "ObstacleController"});
  s->add_message({"enteringAllowed", "ObstacleController", "Car"});
  s->add_message({"enteringDisallowed", "ObstacleController", "Car"});
  s->add_message({"enteredNarrowSection", "Car", "ObstacleController"});
  s->add_message({"exitedNarrowSection", "Car", "ObstacleController"});
  s->add_message({"passedObstacle", "Car", "ObstacleController"});

  using T = AttributeEffect::Target;
  s->add_effect({"approachingObstacle", T::receiver, "position", Symbol{"approaching"}});
  s->add_effect({"register", T::sender, "position", Symbol{"registered"}});
  s->add_effect({"register", T::sender, "registered", true});
  s->add_effect({"enteredNarrowSection", T::sender, "position", Symbol{"passing"}});
  s->add_effect({"exitedNarrowSection", T::sender, "position", Symbol{"passed"}});
  s->add_effect({"passedObstacle", T::sender, "position", Symbol{"passed"}});
  return s;
}

Value decode_attribute(const ObjectSchema& schema, const std::string& cls, const std::string& name,
                       const nlohmann::json& v) {
  const AttributeDecl* decl = schema.find_attribute(cls, name);
  if (!decl) throw Error("class " + cls + " has no attribute '" + name + "'");
  switch (decl->type) {
    case AttrType::boolean:
      if (!v.is_boolean()) break;
      return v.get<bool>();
    case AttrType::number:
      if (!v.is_number_integer()) break;
      return v.get<std::int64_t>();
    case AttrType::symbol:
      if (!v.is_string()) break;
      return Symbol{v.get<std::string>()};
    case AttrType::text:
      if (v.is_string()) return v.get<std::string>();
      if (v.is_object() && v.contains("text")) return v.at("text").get<std::string>();
      break;
    case AttrType::object:
      if (v.is_string()) return ObjectRef{v.get<std::string>()};
      if (v.is_object() && v.contains("ref")) return ObjectRef{v.at("ref").get<std::string>()};
      break;
  }
  throw Error("attribute " + cls + "." + name + ": unexpected value " + v.dump());
}

std::string describe_result(const StepResult& r) {
  if (auto ex = std::get_if<ExecutedEvent>(&r)) {
    return "executed " + to_string(ex->event) + " [step " + std::to_string(ex->event.step_index) + "]";
  }
  if (auto v = std::get_if<Violation>(&r)) {
    std::string what = v->deadlock ? "deadlock: " : "violation: ";
    return what + to_string(v->event) + " breaks instance " + v->instance + " (" + std::string(to_string(v->reason)) +
           ")";
  }
  return "quiescent";
}

void print_entry_transitions(const HistoryEntry& entry, std::ostringstream& os) {
  for (const auto& t : entry.transitions) {
    os << "  " << to_string(t.kind) << " " << t.scenario << " " << t.instance;
    if (!t.step.empty()) os << " @" << t.step;
    os << "\n";
  }
}

void print_transitions(const Session& session, std::ostringstream& os) {
  if (!session.engine().history().empty()) print_entry_transitions(session.engine().history().back(), os);
}

}  // namespace

std::shared_ptr<const ObjectSchema> schema() {
  static const auto s = make_schema();
  return s;
}

std::optional<std::string_view> builtin_resource(std::string_view name) {
  const auto& r = embedded_resources();
  auto it = r.find(std::string(name));
  if (it == r.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> builtin_resource_names() {
  std::vector<std::string> out;
  for (const auto& [name, text] : embedded_resources()) out.push_back(name);
  return out;
}

std::string read_resource(std::string_view ref, const std::filesystem::path& base) {
  constexpr std::string_view prefix = "builtin:";
  if (ref.substr(0, prefix.size()) == prefix) {
    auto r = builtin_resource(ref.substr(prefix.size()));
    if (!r) throw Error("no built-in resource '" + std::string(ref.substr(prefix.size())) + "'");
    return std::string(*r);
  }
  std::filesystem::path p(ref);
  if (p.is_relative() && !base.empty()) p = base / p;
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read '" + p.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

ScenarioSpec listing1_spec() { return parse_specification(read_resource("builtin:v2x/listing1.sml")); }

ScenarioSpec full_spec() {
  return merge(listing1_spec(), parse_specification(read_resource("builtin:v2x/dynamics.sml")));
}

CausalityTree stop_tree() { return load_tree(read_resource("builtin:trees/v2x.causes")); }
CausalityTree traffic_light_tree() { return load_tree(read_resource("builtin:trees/traffic_light.causes")); }
LoopConfig default_config() { return parse_config(read_resource("builtin:v2x/config.json")); }

ObjectSystem base_world() {
  ObjectSystem w;
  w.schema = schema();
  w.add_object("oc", "ObstacleController");
  w.add_object("cp", "CoordinationPlatform").attributes["obstacleCtrl"] = ObjectRef{"oc"};
  w.add_object("sensor", "Sensor");
  return w;
}

void add_car(ObjectSystem& world, const std::string& id, const std::string& direction, bool emergency) {
  auto& car = world.add_object(id, emergency ? "EmergencyVehicle" : "Car");
  car.attributes["direction"] = Symbol{direction};
  car.attributes["position"] = Symbol{"approaching"};
  car.attributes["registered"] = false;
}

ObjectSystem fig2_world() {
  ObjectSystem w = base_world();
  add_car(w, "c1", "L1");
  add_car(w, "c2", "L2");
  add_car(w, "c3", "L2", true);
  auto& c2 = w.state.objects.at("c2");
  c2.attributes["position"] = Symbol{"passing"};
  c2.attributes["registered"] = true;
  auto& c3 = w.state.objects.at("c3");
  c3.attributes["position"] = Symbol{"registered"};
  c3.attributes["registered"] = true;
  auto& oc = w.state.objects.at("oc");
  oc.collections["passingL2"] = {"c2"};
  oc.collections["registeredPriorityVehicles"] = {"c3"};
  return w;
}

ObjectSystem empty_road_world() {
  ObjectSystem w = base_world();
  add_car(w, "c1", "L1");
  return w;
}

std::vector<std::string> check_invariants(const ObjectSnapshot& s) {
  std::vector<std::string> out;
  const auto& sch = *schema();
  std::map<ObjectId, int> passing;
  for (const auto& [id, rec] : s.objects) {
    if (!sch.is_a(rec.class_name, "ObstacleController")) continue;
    for (const char* list : {"passingL1", "passingL2"}) {
      if (auto it = rec.collections.find(list); it != rec.collections.end()) {
        for (const auto& car : it->second) ++passing[car];
      }
    }
    if (auto it = rec.collections.find("registeredPriorityVehicles"); it != rec.collections.end()) {
      for (const auto& car : it->second) {
        const ObjectRecord* c = s.find(car);
        auto reg = c ? c->attributes.find("registered") : decltype(c->attributes.find(""))();
        if (!c || reg == c->attributes.end() || reg->second != Value(true)) {
          out.push_back(car + " is a registered priority vehicle of " + id + " but not registered");
        }
      }
    }
  }
  for (const auto& [car, n] : passing) {
    if (n > 1) out.push_back(car + " is in more than one passing list");
  }
  return out;
}

SceneDefinition parse_scene(std::string_view json_text, const std::filesystem::path& base) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("scene: ") + e.what());
  }
  if (j.value("schema", "") != "mabex-scene/1") throw Error("scene: expected schema \"mabex-scene/1\"");
  SceneDefinition s;
  s.base = base;
  try {
    s.name = j.at("name").get<std::string>();
    s.description = j.value("description", "");
    s.spec_refs = j.at("spec").get<std::vector<std::string>>();
    s.tree_refs = j.value("trees", std::vector<std::string>{});
    s.config_ref = j.value("config", "");
    s.prelude = j.value("prelude", std::vector<std::string>{});
    s.alphabet = j.value("alphabet", std::vector<std::string>{});
    s.world.schema = schema();
    for (const auto& o : j.at("objects")) {
      std::string id = o.at("id").get<std::string>();
      std::string cls = o.at("class").get<std::string>();
      auto& rec = s.world.add_object(id, cls);
      const nlohmann::json attrs = o.value("attributes", nlohmann::json::object());
      const nlohmann::json colls = o.value("collections", nlohmann::json::object());
      for (const auto& a : attrs.items()) {
        rec.attributes[a.key()] = decode_attribute(*s.world.schema, cls, a.key(), a.value());
      }
      for (const auto& c : colls.items()) {
        rec.collections[c.key()] = c.value().get<std::vector<ObjectId>>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("scene '" + s.name + "': " + e.what());
  }
  s.world.check_integrity();
  return s;
}

std::vector<std::string> builtin_scene_names() {
  std::vector<std::string> out;
  for (const auto& name : builtin_resource_names()) {
    if (name.rfind("scenes/", 0) == 0 && name.size() > 12 && name.substr(name.size() - 5) == ".json") {
      out.push_back(name.substr(7, name.size() - 12));
    }
  }
  return out;
}

SceneDefinition find_scene(std::string_view name_or_file, const std::filesystem::path& scene_dir) {
  std::string name = trim(name_or_file);
  if (name.empty()) throw UnknownScene("no scene given");
  if (!scene_dir.empty()) {
    auto p = scene_dir / (name + ".json");
    if (std::filesystem::is_regular_file(p)) return parse_scene(read_resource(p.string()), p.parent_path());
  }
  if (auto r = builtin_resource("scenes/" + name + ".json")) return parse_scene(*r);
  std::filesystem::path p(name);
  if (std::filesystem::is_regular_file(p)) return parse_scene(read_resource(p.string()), p.parent_path());
  throw UnknownScene("unknown scene '" + name + "'");
}

std::vector<Event> parse_alphabet(const std::vector<std::string>& events, const ObjectSystem& world) {
  std::vector<Event> out;
  for (const auto& e : events) out.push_back(parse_event(e, world));
  return out;
}

std::unique_ptr<Session> open_scene(const SceneDefinition& scene, const SceneOptions& options) {
  ScenarioSpec spec;
  if (options.spec_override) {
    spec = *options.spec_override;
  } else {
    for (const auto& ref : scene.spec_refs) spec = merge(spec, parse_specification(read_resource(ref, scene.base)));
  }
  if (options.strip_annotations) spec = strip_annotations(spec);
  std::vector<CausalityTree> trees;
  if (options.with_trees) {
    for (const auto& ref : scene.tree_refs) trees.push_back(load_tree(read_resource(ref, scene.base)));
  }
  LoopConfig config;
  if (!scene.config_ref.empty()) config = parse_config(read_resource(scene.config_ref, scene.base));

  Engine engine(std::move(spec), scene.world);
  for (const auto& text : scene.prelude) {
    StepResult r = engine.inject_environment_event(parse_event(text, engine.world()));
    if (auto v = std::get_if<Violation>(&r)) {
      throw Error("scene '" + scene.name + "': prelude event '" + text + "' violates instance " + v->instance);
    }
    RunResult run = engine.run_to_quiescence();
    if (run.violation) {
      throw Error("scene '" + scene.name + "': prelude run after '" + text + "' ends in a violation");
    }
  }
  auto alphabet = parse_alphabet(scene.alphabet, engine.world());
  return std::make_unique<Session>(std::move(engine), std::move(config), std::move(trees), std::move(alphabet),
                                   options.ledger_path);
}

std::unique_ptr<Session> load_scene(std::string_view name_or_file, const SceneOptions& options,
                                    const std::filesystem::path& scene_dir) {
  return open_scene(find_scene(name_or_file, scene_dir), options);
}

std::string recipient_id(std::string_view name) {
  std::string n = trim(name);
  if (n.empty()) return "driver";
  if (n == "end_user" || n == "engineer" || n == "machine") return default_recipient(parse_audience(n)).id;
  return n;
}

std::string transcript_header(const Session& session, const ScriptOptions& options) {
  std::ostringstream os;
  os << "# mabex transcript\n";
  os << "# scene: " << options.scene_name << "\n";
  const auto& engine = session.engine();
  os << "# scenarios: " << engine.spec().scenarios.size() << ", objects: " << engine.world().state.objects.size()
     << ", history: " << engine.history().size() << "\n";
  os << "# recipient: " << options.recipient << "\n";
  return os.str();
}

void run_command(Session& session, std::string_view raw, const ScriptOptions& options, Transcript& out) {
  std::string line = trim(raw);
  if (line.empty() || line[0] == '#') return;
  std::ostringstream os;
  os << "> " << line << "\n";
  auto space = line.find(' ');
  std::string cmd = line.substr(0, space);
  std::string arg = space == std::string::npos ? "" : trim(line.substr(space + 1));
  const std::string& rid = options.recipient;
  bool engineer = session.recipient(rid).audience == Audience::engineer;

  auto answer = [&](const Answer& a) {
    os << a.text << "\n";
    if (!a.ok && a.error_code != "unexplainable") out.error = true;
  };

  try {
    if (cmd == "inject") {
      StepResult r = session.inject(arg);
      if (std::holds_alternative<Violation>(r)) out.violation = true;
      os << describe_result(r) << "\n";
      if (engineer) print_transitions(session, os);
    } else if (cmd == "step") {
      StepResult r = session.step();
      if (std::holds_alternative<Violation>(r)) out.violation = true;
      os << describe_result(r) << "\n";
      if (engineer && std::holds_alternative<ExecutedEvent>(r)) print_transitions(session, os);
    } else if (cmd == "run") {
      RunResult r = session.run();
      for (const auto& e : r.events) {
        os << "executed " << to_string(e) << " [step " << e.step_index << "]\n";
        if (engineer) print_entry_transitions(session.engine().history()[e.step_index - 1], os);
      }
      if (r.violation) {
        out.violation = true;
        os << describe_result(*r.violation) << "\n";
      } else {
        os << "quiescent\n";
      }
    } else if (cmd == "why") {
      answer(session.why(arg.empty() ? "last" : arg, rid));
    } else if (cmd == "whycond") {
      answer(session.why_condition(arg, rid));
    } else if (cmd == "when") {
      std::optional<std::size_t> horizon;
      auto close = arg.rfind(')');
      if (close != std::string::npos && close + 1 < arg.size()) {
        std::string tail = trim(arg.substr(close + 1));
        if (!tail.empty()) {
          if (!std::all_of(tail.begin(), tail.end(), [](unsigned char c) { return std::isdigit(c); })) {
            throw Error("horizon must be a number");
          }
          horizon = std::stoul(tail);
        }
        arg = arg.substr(0, close + 1);
      }
      answer(session.when(arg, horizon, rid));
    } else if (cmd == "whynot") {
      answer(session.why_not(arg, rid));
    } else if (cmd == "ask") {
      answer(session.ask(arg, rid));
    } else if (cmd == "reload") {
      std::optional<ScenarioSpec> spec;
      std::optional<std::vector<CausalityTree>> trees;
      std::istringstream files(arg);
      std::string f;
      std::string problem;
      while (files >> f) {
        try {
          std::string text = read_resource(f, options.base);
          if (f.size() > 7 && f.substr(f.size() - 7) == ".causes") {
            if (!trees) trees.emplace();
            trees->push_back(load_tree(text));
          } else {
            spec = spec ? merge(*spec, parse_specification(text)) : parse_specification(text);
          }
        } catch (const Error& e) {
          problem = f + ": " + e.what();
          break;
        }
      }
      if (!problem.empty()) {
        os << "reload rejected: " << problem << "\n";
        out.error = true;
      } else {
        ReloadReport rep = session.reload(std::move(spec), std::move(trees));
        if (!rep.accepted) {
          os << "reload rejected: " << rep.error << "\n";
          out.error = true;
        } else {
          os << "reload accepted: " << rep.resolved.size() << " resolved, " << rep.still_pending << " pending\n";
        }
      }
    } else if (cmd == "followups") {
      for (const auto& f : session.last_follow_ups()) os << "  " << f.label << " => whycond " << f.need.target_text << "\n";
    } else if (cmd == "ledger") {
      if (session.ledger().entries().empty()) os << "ledger empty\n";
      for (const auto& e : session.ledger().entries()) {
        os << e.id << " " << (e.status == LedgerStatus::pending ? "pending" : "resolved") << " "
           << target_key(e.need) << " (" << e.need.behavior_label << ")\n";
      }
    } else if (cmd == "react") {
      if (arg != "helpful" && arg != "unhelpful") throw Error("react takes helpful or unhelpful");
      session.react(rid, arg == "helpful");
      os << "noted\n";
    } else if (cmd == "history") {
      os << export_history(session.engine().history());
    } else {
      throw Error("unknown command '" + cmd + "'");
    }
  } catch (const Error& e) {
    os << "error: " << e.what() << "\n";
    out.error = true;
  }
  out.text += os.str();
}

Transcript run_script(Session& session, std::string_view script, const ScriptOptions& options) {
  Transcript t;
  t.text = transcript_header(session, options);
  std::size_t pos = 0;
  while (pos <= script.size()) {
    auto nl = script.find('\n', pos);
    std::string_view line = script.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    run_command(session, line, options, t);
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return t;
}

}  // namespace mabex::v2x
