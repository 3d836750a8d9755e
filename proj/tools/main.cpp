#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "chargegame/cli_runner.hpp"

using namespace chargegame;

int main(int argc, char** argv) {
  CLI::App app{"Charging-game equilibria and price-of-anarchy experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  int threads = 0;
  bool timing = false;
  std::string anarchy_class;
  double degree = 1.0;

  const std::pair<const char*, const char*> commands[] = {
      {"validate", "Check price assumptions for a game or scenario"},
      {"solve", "Solve the Nash, Wardrop and social problems"},
      {"sweep", "Population sweep writing sweep, poa and cost-gap CSVs"},
      {"counterexample", "Build the misaligned slab game and report PoA by M"},
      {"anarchy-value", "Anarchy value of a price class"},
      {"ev-gen", "Generate an EV fleet as a game description"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    const bool anarchy = std::string(name) == "anarchy-value";
    auto* cfg = sub->add_option("--config,-c", config_path, "JSON config file");
    if (!anarchy) cfg->required()->check(CLI::ExistingFile);
    sub->add_option("--out,-o", out_dir, "Output directory (overrides output_dir)");
    if (std::string(name) == "sweep") {
      sub->add_option("--threads", threads, "Thread cap (also CHARGEGAME_THREADS)")->check(CLI::PositiveNumber);
      sub->add_flag("--timing", timing, "Record wall_time_ms per cell");
    }
    if (anarchy) {
      sub->add_option("--class", anarchy_class, "affine, monomial or polynomial")
          ->check(CLI::IsMember({"affine", "monomial", "polynomial"}));
      sub->add_option("--degree", degree, "Degree for monomial and polynomial classes")->check(CLI::PositiveNumber);
    }
  }
  CLI11_PARSE(app, argc, argv);

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    cli::RunConfig config;
    if (!config_path.empty()) config = cli::load_config(config_path);
    config.command = cli::parse_command(name);
    if (!out_dir.empty()) config.output_dir = out_dir;
    if (timing) config.record_timing = true;
    if (threads > 0) setenv("CHARGEGAME_THREADS", std::to_string(threads).c_str(), 1);
    if (!anarchy_class.empty()) {
      AnarchyClass cls;
      cls.kind = anarchy_class == "affine"     ? AnarchyClass::Kind::Affine
                 : anarchy_class == "monomial" ? AnarchyClass::Kind::Monomial
                                               : AnarchyClass::Kind::Polynomial;
      cls.degree = degree;
      config.anarchy_class = cls;
    }
    return cli::run(config, std::cout, std::cerr);
  } catch (const cli::ParseError& e) {
    std::cerr << "chargegame: parse: " << e.what() << "\n";
    return cli::kExitValidation;
  } catch (const cli::ConfigError& e) {
    for (const auto& issue : e.issues()) std::cerr << fmt::format("chargegame: config: {}: {}\n", issue.path, issue.message);
    return cli::kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "chargegame: io: " << e.what() << "\n";
    return cli::kExitIo;
  }
}
