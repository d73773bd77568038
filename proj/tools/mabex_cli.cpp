// Command-line front end. Talks to the library only through mabex.h.
#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mabex/mabex.h"

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kUsage = 2;

struct OwnedString {
  char* p = nullptr;
  ~OwnedString() { mabex_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

bool read_file(const std::string& path, std::string& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::ostringstream os;
  os << in.rdbuf();
  out = os.str();
  return true;
}

int exit_code(mabex_status s) {
  switch (s) {
    case MABEX_OK: return kOk;
    case MABEX_UNKNOWN_SCENE:
    case MABEX_INVALID_ARGUMENT: return kUsage;
    default: return kFailed;
  }
}

int report(mabex_status s) {
  if (s != MABEX_OK) std::cerr << "mabex: " << mabex_status_name(s) << ": " << mabex_last_error() << "\n";
  return exit_code(s);
}

struct LoadFlags {
  bool strip_annotations = false;
  bool no_trees = false;

  std::string json() const {
    return std::string("{\"strip_annotations\":") + (strip_annotations ? "true" : "false") +
           ",\"with_trees\":" + (no_trees ? "false" : "true") + "}";
  }
};

int cmd_run(const std::string& scene, const std::string& scene_dir, const LoadFlags& flags,
            const std::string& script_path, const std::string& recipient, const std::string& out_path) {
  std::string script;
  if (!script_path.empty() && !read_file(script_path, script)) {
    std::cerr << "mabex: cannot read script '" << script_path << "'\n";
    return kUsage;
  }
  OwnedString transcript;
  mabex_status s = mabex_run_script(scene.c_str(), scene_dir.empty() ? nullptr : scene_dir.c_str(), flags.json().c_str(), script.c_str(),
                                    recipient.c_str(), &transcript.p);
  if (transcript.p) {
    if (out_path.empty()) {
      std::cout << transcript.str();
    } else {
      std::ofstream out(out_path, std::ios::binary);
      if (!out) {
        std::cerr << "mabex: cannot write '" << out_path << "'\n";
        return kFailed;
      }
      out << transcript.str();
    }
  }
  return report(s);
}

int cmd_repl(const std::string& scene, const std::string& scene_dir, const LoadFlags& flags,
             const std::string& recipient) {
  mabex_session* session = nullptr;
  mabex_status s = mabex_session_open(scene.c_str(), scene_dir.empty() ? nullptr : scene_dir.c_str(),
                                      flags.json().c_str(), &session);
  if (s != MABEX_OK) return report(s);
  {
    OwnedString header;
    mabex_session_header(session, recipient.c_str(), &header.p);
    std::cout << header.str() << std::flush;
  }
  bool violation = false;
  std::string line;
  while (std::getline(std::cin, line)) {
    if (line == "quit" || line == "exit") break;
    OwnedString out;
    mabex_status r = mabex_session_command(session, line.c_str(), recipient.c_str(), &out.p);
    if (r == MABEX_VIOLATION) violation = true;
    std::cout << out.str() << std::flush;
  }
  mabex_session_close(session);
  return violation ? kFailed : kOk;
}

int cmd_check(const std::vector<std::string>& files) {
  int rc = kOk;
  for (const auto& f : files) {
    std::string text;
    if (!read_file(f, text)) {
      std::cerr << "mabex: cannot read '" << f << "'\n";
      return kUsage;
    }
    OwnedString diags;
    mabex_status s = mabex_check_spec(text.c_str(), f.c_str(), &diags.p);
    std::cout << diags.str();
    if (s == MABEX_OK) {
      std::cout << f << ": ok\n";
    } else {
      rc = std::max(rc, exit_code(s));
    }
  }
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mabex: self-explaining scenario play-out"};
  app.require_subcommand(1);

  std::string scene, scene_dir, script, recipient = "end_user", out;
  auto* run = app.add_subcommand("run", "run a scene, optionally with a command script");
  run->add_option("scene", scene, "scene name or scene file")->required();
  run->add_option("--script", script, "command script");
  run->add_option("--recipient", recipient, "end_user, engineer, machine or a recipient id");
  run->add_option("--out", out, "write the transcript here instead of stdout");
  run->add_option("--scene-dir", scene_dir, "directory with additional scene files");
  LoadFlags flags;
  run->add_flag("--strip-annotations", flags.strip_annotations, "drop every @EX annotation from the scene's spec");
  run->add_flag("--no-trees", flags.no_trees, "do not load the scene's causality trees");

  auto* repl = app.add_subcommand("repl", "read commands from stdin against a live scene");
  repl->add_option("scene", scene, "scene name or scene file")->required();
  repl->add_option("--recipient", recipient, "end_user, engineer, machine or a recipient id");
  repl->add_option("--scene-dir", scene_dir, "directory with additional scene files");
  repl->add_flag("--strip-annotations", flags.strip_annotations, "drop every @EX annotation from the scene's spec");
  repl->add_flag("--no-trees", flags.no_trees, "do not load the scene's causality trees");

  std::vector<std::string> files;
  auto* check = app.add_subcommand("check", "parse and validate specification files");
  check->add_option("files", files, ".sml files")->required();

  std::string listen;
  unsigned ttl = 0;
  auto* serve = app.add_subcommand("serve", "run the HTTP session service");
  serve->add_option("--listen", listen, "host:port (default MABEX_LISTEN or 127.0.0.1:8080)");
  serve->add_option("--scene-dir", scene_dir, "scene directory (default MABEX_SCENE_DIR)");
  serve->add_option("--ttl", ttl, "idle session lifetime in seconds (default MABEX_SESSION_TTL or 1800)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  if (*run) return cmd_run(scene, scene_dir, flags, script, recipient, out);
  if (*repl) return cmd_repl(scene, scene_dir, flags, recipient);
  if (*check) return cmd_check(files);
  if (*serve) {
    return report(mabex_serve(listen.empty() ? nullptr : listen.c_str(), scene_dir.empty() ? nullptr : scene_dir.c_str(), ttl));
  }
  return kUsage;
}
