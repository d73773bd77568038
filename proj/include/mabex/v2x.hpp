#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mabex/mabex_loop.hpp"

namespace mabex::v2x {

// Classes Sensor, Car, EmergencyVehicle (is-a Car), ObstacleController and
// CoordinationPlatform with the narrow-passage messages and their effects
// on car position tags.
std::shared_ptr<const ObjectSchema> schema();

// Data files compiled into the library, addressed as e.g. "v2x/listing1.sml".
std::optional<std::string_view> builtin_resource(std::string_view name);
std::vector<std::string> builtin_resource_names();
// "builtin:<name>" or a file path (relative paths resolve against `base`).
std::string read_resource(std::string_view ref, const std::filesystem::path& base = {});

ScenarioSpec listing1_spec();
// Obstacle rules plus the registry bookkeeping scenarios.
ScenarioSpec full_spec();
CausalityTree stop_tree();
CausalityTree traffic_light_tree();
LoopConfig default_config();

// c1 on L1 approaching; c2 passing on L2; emergency vehicle c3 on L2
// registered as priority vehicle. No history behind it.
ObjectSystem fig2_world();
// c1 on L1 approaching, empty registries.
ObjectSystem empty_road_world();
// cp, oc and sensor only.
ObjectSystem base_world();
void add_car(ObjectSystem& world, const std::string& id, const std::string& direction, bool emergency = false);

// Descriptions of violated world invariants (empty when all hold).
std::vector<std::string> check_invariants(const ObjectSnapshot& s);

class UnknownScene : public Error {
 public:
  using Error::Error;
};

struct SceneDefinition {
  std::string name;
  std::string description;
  std::vector<std::string> spec_refs;
  std::vector<std::string> tree_refs;
  std::string config_ref;
  ObjectSystem world;
  std::vector<std::string> prelude;
  std::vector<std::string> alphabet;
  std::filesystem::path base;  // directory relative refs resolve against
};

SceneDefinition parse_scene(std::string_view json_text, const std::filesystem::path& base = {});
// Built-in name ("fig2", "empty-road"), a scene file, or <scene_dir>/<name>.json.
SceneDefinition find_scene(std::string_view name_or_file, const std::filesystem::path& scene_dir = {});
std::vector<std::string> builtin_scene_names();

struct SceneOptions {
  bool strip_annotations = false;
  bool with_trees = true;
  std::string ledger_path;
  std::optional<ScenarioSpec> spec_override;
};

// Builds the engine, replays the prelude (each event followed by
// run_to_quiescence) and opens a session whose monitor starts after it.
std::unique_ptr<Session> open_scene(const SceneDefinition& scene, const SceneOptions& options = {});
std::unique_ptr<Session> load_scene(std::string_view name_or_file, const SceneOptions& options = {},
                                    const std::filesystem::path& scene_dir = {});

std::vector<Event> parse_alphabet(const std::vector<std::string>& events, const ObjectSystem& world);

struct Transcript {
  std::string text;
  bool violation = false;
  bool error = false;  // a command failed
};

// Audience names (end_user, engineer, machine) map to the default recipient
// of that audience; anything else is taken as a recipient id.
std::string recipient_id(std::string_view name_or_audience);

struct ScriptOptions {
  std::string scene_name;
  std::string recipient = "driver";
  std::filesystem::path base;  // for reload paths
};

// Executes one command against the session and appends its output.
void run_command(Session& session, std::string_view line, const ScriptOptions& options, Transcript& out);
Transcript run_script(Session& session, std::string_view script, const ScriptOptions& options);
std::string transcript_header(const Session& session, const ScriptOptions& options);

}  // namespace mabex::v2x
