#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"

using namespace mabex;

namespace {

const std::filesystem::path kSource = MABEX_SOURCE_DIR;

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  EXPECT_TRUE(in) << p;
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

v2x::Transcript run(std::string_view scene, const std::string& script, std::string_view recipient,
                    const v2x::SceneOptions& options = {}) {
  auto s = v2x::load_scene(scene, options);
  v2x::ScriptOptions o{std::string(scene), v2x::recipient_id(recipient), kSource};
  return v2x::run_script(*s, script, o);
}

struct GoldenCase {
  const char* scene;
  const char* script;  // relative to the source tree
  const char* recipient;
  const char* golden;
  bool stripped = false;
};

class Golden : public ::testing::TestWithParam<GoldenCase> {};

}  // namespace

TEST(Scenes, Fig2World) {
  auto s = v2x::load_scene("fig2");
  const ObjectSnapshot& w = s->engine().world().state;
  EXPECT_EQ(w.find("c1")->attributes.at("direction"), Value(Symbol{"L1"}));
  EXPECT_EQ(w.find("c1")->attributes.at("position"), Value(Symbol{"approaching"}));
  EXPECT_EQ(w.find("oc")->collections.at("passingL2"), std::vector<ObjectId>{"c2"});
  EXPECT_EQ(w.find("oc")->collections.at("registeredPriorityVehicles"), std::vector<ObjectId>{"c3"});
  EXPECT_EQ(w.find("c3")->class_name, "EmergencyVehicle");
  EXPECT_EQ(s->engine().spec().scenarios.size(), 9u);
  EXPECT_EQ(s->alphabet().size(), 2u);
  EXPECT_EQ(s->trees().size(), 1u);
  EXPECT_TRUE(v2x::check_invariants(w).empty());
}

TEST(Scenes, Fig2PreludeMatchesHandBuiltWorld) {
  auto s = v2x::load_scene("fig2");
  ObjectSnapshot built = v2x::fig2_world().state;
  const ObjectSnapshot& replayed = s->engine().world().state;
  for (const char* id : {"c1", "c2", "c3", "oc"}) EXPECT_EQ(replayed.find(id)->collections, built.find(id)->collections) << id;
  EXPECT_EQ(replayed.find("c2")->attributes, built.find("c2")->attributes);
}

TEST(Scenes, EmptyRoad) {
  auto s = v2x::load_scene("empty-road");
  const ObjectSnapshot& w = s->engine().world().state;
  std::size_t cars = 0;
  for (const auto& [id, rec] : w.objects) cars += s->engine().schema().is_a(rec.class_name, "Car") ? 1 : 0;
  EXPECT_EQ(cars, 1u);
  const ObjectRecord* oc = w.find("oc");
  for (const char* c : {"passingL1", "passingL2", "registeredPriorityVehicles"}) {
    auto it = oc->collections.find(c);
    EXPECT_TRUE(it == oc->collections.end() || it->second.empty()) << c;
  }
  EXPECT_TRUE(s->engine().history().empty());
}

TEST(Scenes, Errors) {
  EXPECT_THROW(v2x::load_scene("no-such-scene"), v2x::UnknownScene);
  EXPECT_THROW(v2x::load_scene("/nonexistent/dir/scene.json"), v2x::UnknownScene);
  EXPECT_THROW(v2x::parse_scene(R"({"schema":"mabex-scene/9","name":"x"})"), Error);
  EXPECT_THROW(v2x::parse_scene("not json"), Error);
  EXPECT_THROW(v2x::parse_scene(R"({"schema":"mabex-scene/1","name":"x","objects":[{"id":"a","class":"Bus"}]})"), Error);
}

TEST(Scenes, FromSceneDirectory) {
  auto dir = std::filesystem::temp_directory_path() / "mabex_scene_dir_test";
  std::filesystem::create_directories(dir);
  std::string text = slurp(kSource / "data/scenes/empty-road.json");
  text.replace(text.find("\"empty-road\""), 12, "\"lonely\"");
  { std::ofstream(dir / "lonely.json") << text; }
  auto s = v2x::load_scene("lonely", {}, dir);
  EXPECT_EQ(s->engine().world().state.objects.size(), 4u);
  std::filesystem::remove_all(dir);
}

TEST(Scenes, BadPreludeIsReported) {
  auto def = v2x::parse_scene(slurp(kSource / "data/scenes/fig2.json"));
  auto unknown = def;
  unknown.prelude.insert(unknown.prelude.begin(), "c9 -> oc.register()");
  EXPECT_THROW(v2x::open_scene(unknown), Error);
  // A second approach while c2's registration is pending breaks the strict register step.
  auto strict = def;
  strict.prelude.insert(strict.prelude.begin() + 1, "sensor -> c2.approachingObstacle()");
  try {
    v2x::open_scene(strict);
    FAIL() << "no error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("prelude"), std::string::npos) << e.what();
  }
}

TEST(Invariants, HoldAfterEveryEvent) {
  oracle::Rng rng(31);
  for (int run = 0; run < 40; ++run) {
    ObjectSystem w = oracle::random_world(rng, 4);
    Engine e(v2x::full_spec(), w);
    auto alphabet = oracle::v2x_alphabet(w);
    oracle::play_trace(e, oracle::random_trace(rng, alphabet, 30));
    for (std::uint64_t k = 0; k <= e.history().size(); ++k) {
      auto bad = v2x::check_invariants(e.snapshot_at(k));
      ASSERT_TRUE(bad.empty()) << "run " << run << " step " << k << ": " << bad.front();
    }
  }
}

TEST(Invariants, DetectsBrokenWorlds) {
  ObjectSystem w = v2x::fig2_world();
  w.state.objects.at("oc").collections["passingL1"] = {"c2"};
  EXPECT_EQ(v2x::check_invariants(w.state).size(), 1u);
  w = v2x::fig2_world();
  w.state.objects.at("c3").attributes["registered"] = false;
  EXPECT_EQ(v2x::check_invariants(w.state).size(), 1u);
}

TEST(Transcript, EmptyScriptIsHeaderOnly) {
  auto t = run("fig2", "", "end_user");
  EXPECT_EQ(t.text,
            "# mabex transcript\n# scene: fig2\n# scenarios: 9, objects: 6, history: 9\n# recipient: driver\n");
  EXPECT_FALSE(t.violation);
  EXPECT_FALSE(t.error);
}

TEST(Transcript, Fig2EndsWithSentence) {
  auto t = run("fig2",
               "inject sensor -> c1.approachingObstacle()\ninject c1 -> oc.register()\nstep\nwhy oc -> c1.enteringDisallowed()\n",
               "end_user");
  const std::string tail =
      "Entering is disallowed because other cars are passing the obstacle in the opposite direction and a priority "
      "vehicle is registered for passing the obstacle\n";
  ASSERT_GE(t.text.size(), tail.size());
  EXPECT_EQ(t.text.substr(t.text.size() - tail.size()), tail);
}

TEST(Transcript, FollowUpAnswersPriority) {
  auto t = run("fig2", slurp(kSource / "data/v2x/fig2.script"), "end_user");
  EXPECT_NE(t.text.find("car registered is a priority vehicle because it is an emergency vehicle."), std::string::npos);
}

TEST(Transcript, Deterministic) {
  std::string script = slurp(kSource / "tests/scripts/fig2_followups.script");
  EXPECT_EQ(run("fig2", script, "engineer").text, run("fig2", script, "engineer").text);
}

TEST(Transcript, ErrorsAndViolationsAreFlagged) {
  auto bad = run("fig2", "inject c9 -> oc.register()\n", "end_user");
  EXPECT_TRUE(bad.error);
  EXPECT_NE(bad.text.find("error: unknown object 'c9'"), std::string::npos) << bad.text;
  // An event no scenario mentions is simply recorded.
  auto plain = run("fig2", "inject c1 -> oc.honk()\n", "end_user");
  EXPECT_FALSE(plain.error);
  EXPECT_FALSE(plain.violation);
  auto viol = run("fig2", "inject sensor -> c1.approachingObstacle()\ninject sensor -> c1.approachingObstacle()\n", "end_user");
  EXPECT_TRUE(viol.violation);
  EXPECT_NE(viol.text.find("violation: "), std::string::npos);
  auto unknown = run("fig2", "fly away\n", "end_user");
  EXPECT_TRUE(unknown.error);
}

TEST_P(Golden, MatchesFile) {
  const GoldenCase& c = GetParam();
  v2x::SceneOptions o;
  if (c.stripped) {
    o.strip_annotations = true;
    o.with_trees = false;
  }
  auto t = run(c.scene, slurp(kSource / c.script), c.recipient, o);
  EXPECT_EQ(t.text, slurp(kSource / "tests/golden" / c.golden));
}

INSTANTIATE_TEST_SUITE_P(
    Transcripts, Golden,
    ::testing::Values(GoldenCase{"fig2", "data/v2x/fig2.script", "end_user", "fig2_end_user.txt"},
                      GoldenCase{"fig2", "data/v2x/fig2.script", "engineer", "fig2_engineer.txt"},
                      GoldenCase{"fig2", "data/v2x/fig2.script", "machine", "fig2_machine.txt"},
                      GoldenCase{"empty-road", "tests/scripts/empty_road.script", "end_user", "empty_road_end_user.txt"},
                      GoldenCase{"fig2", "tests/scripts/fig2_followups.script", "end_user", "fig2_followups_end_user.txt"},
                      GoldenCase{"fig2", "tests/scripts/fig2_stripped_reload.script", "end_user",
                                 "fig2_stripped_reload_end_user.txt", true}),
    [](const auto& info) {
      std::string n = std::string(info.param.golden);
      n = n.substr(0, n.find('.'));
      for (auto& ch : n) {
        if (ch == '-') ch = '_';
      }
      return n;
    });
