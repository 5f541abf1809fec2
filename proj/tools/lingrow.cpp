// lingrow density-check|solve|moser|full-report --config cfg.json --out dir [--seed n]

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lingrow/cli.hpp"

int main(int argc, char** argv) {
  namespace cli = lingrow::cli;

  CLI::App app{"Linear-growth variational solver and Moser-iteration audit"};
  std::string command;
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  app.add_option("command", command, "density-check, solve, moser or full-report")->required();
  app.add_option("--config", config, "JSON run configuration")->required();
  app.add_option("--out", out, "output directory")->required();
  app.add_option("--seed", seed, "overrides the configuration seed");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kExitBadInput;
  }

  const auto cmd = cli::parse_command(command);
  if (!cmd) {
    std::cerr << "unknown command '" << command << "'\n";
    return cli::kExitBadInput;
  }
  try {
    const cli::RunConfig cfg = cli::load_config(config, seed);
    return cli::run(*cmd, cfg, out, std::cerr);
  } catch (const lingrow::GeometryError& e) {
    std::cerr << "geometry error: " << e.what() << "\n";
    return cli::kExitBadInput;
  } catch (const cli::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return cli::kExitBadInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitCheckFailed;
  }
}
