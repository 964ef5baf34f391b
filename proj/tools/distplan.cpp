/* Copyright 2026 The distplan Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Command-line front end: distplan <subcommand> --config PATH [options].

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "distplan/distplan.hpp"

namespace {

namespace fs = std::filesystem;
using namespace distplan;

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError(str("cannot write '", path.string(), "'"));
  out << content;
}

int execute(const std::string& sub, const std::string& config_path,
            const std::optional<std::string>& profile, std::optional<std::string> out_dir,
            const std::string& format, std::int64_t seed) {
  const ExperimentConfig cfg = load_config(config_path);
  const RunResult r = run(sub, cfg, profile);
  std::optional<HardwareProfile> resolved;
  if (sub != "analyze" && sub != "capacity") resolved = resolve_profile(cfg, profile);
  const Json report = make_report(cfg, resolved ? &*resolved : nullptr, seed, r.result);
  const std::string json_text = report.dump(2) + "\n";

  if (!out_dir) out_dir = cfg.output.path;
  if (format == "svg" && !r.timeline) {
    throw ValidationError(str("'", sub, "' produces no timeline to render as svg"));
  }
  if (out_dir) {
    fs::create_directories(*out_dir);
    const fs::path dir(*out_dir);
    write_file(dir / (sub + ".json"), json_text);
    bool svg = format == "svg";
    bool text = format == "text";
    for (const auto& f : cfg.output.formats) {
      svg = svg || f == "svg";
      text = text || f == "text";
    }
    if (svg && r.timeline) write_file(dir / (sub + ".svg"), to_svg(*r.timeline));
    if (text) write_file(dir / (sub + ".txt"), r.text);
    std::cerr << "wrote " << (dir / (sub + ".json")).string() << "\n";
    return 0;
  }
  if (format == "text") {
    std::cout << r.text;
  } else if (format == "svg") {
    std::cout << to_svg(*r.timeline);
  } else {
    std::cout << json_text;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distributed training planner and step simulator"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::string> profile;
  std::optional<std::string> out_dir;
  std::string format = "json";
  std::int64_t seed = 0;
  std::string chosen;
  for (const auto& name : subcommands()) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--profile", profile, "hardware profile name or JSON file");
    sub->add_option("--out", out_dir, "directory for report files");
    sub->add_option("--format", format, "json, text or svg")->check(CLI::IsMember({"json", "text", "svg"}));
    sub->add_option("--seed", seed, "reserved; every operation is deterministic");
    sub->callback([&chosen, name] { chosen = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ErrorKind::kConfig);
  }
  try {
    return execute(chosen, config_path, profile, out_dir, format, seed);
  } catch (const Error& e) {
    std::cerr << "distplan " << chosen << ": " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "distplan " << chosen << ": internal error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::kInvariant);
  }
}
