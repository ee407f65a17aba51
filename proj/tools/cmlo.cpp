#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cmlo/cli.hpp"

int main(int argc, char** argv) {
  using namespace cmlo::cli;

  CLI::App app{"Event-triggered model updating lab: bound checks, runs and reports"};
  app.require_subcommand(1);

  std::string verify_config;
  auto* verify = app.add_subcommand("verify-bounds", "Run the bound verification campaigns");
  verify->add_option("config", verify_config, "verify-bounds config (JSON)")->required();

  std::string run_config;
  auto* run = app.add_subcommand("run", "Run CMLO and/or fixed-interval training per seed");
  run->add_option("config", run_config, "run config (JSON)")->required();

  std::string ablate_config;
  auto* ablate =
      app.add_subcommand("ablate-trigger", "Run config in both modes (CMLO and every fixed interval)");
  ablate->add_option("config", ablate_config, "run config (JSON)")->required();

  std::vector<std::string> report_dirs;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Aggregate run directories into comparison tables");
  report->add_option("dirs", report_dirs, "run directories or their parents")->required();
  report->add_option("-o,--out", report_out, "write groups.csv and stages.csv here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (verify->parsed()) return cmd_verify_bounds(verify_config, std::cout, std::cerr);
  if (run->parsed()) return cmd_run(run_config, false, std::cout, std::cerr);
  if (ablate->parsed()) return cmd_run(ablate_config, true, std::cout, std::cerr);
  return cmd_report(report_dirs, report_out, std::cout, std::cerr);
}
