// Command-line front end: wbary run <config> [overrides]
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wbary/errors.hpp"
#include "wbary/io.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Multi-species Wasserstein barycenters and geodesics with reactions"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Solve the problem described by a config file");
  std::string config_path;
  double tol = 0.0;
  int max_iter = 0;
  std::string out_dir;
  std::vector<double> snapshots;
  std::string mode;
  run->add_option("config", config_path, "Config file")->required();
  auto* tol_opt = run->add_option("--tol", tol, "Stopping tolerance on err");
  auto* iter_opt = run->add_option("--max-iter", max_iter, "Iteration limit");
  auto* out_opt = run->add_option("--out", out_dir, "Output directory");
  auto* snap_opt = run->add_option("--snapshots", snapshots, "Snapshot times, e.g. 0,0.5,1")->delimiter(',');
  auto* mode_opt =
      run->add_option("--mode", mode, "barycenter or geodesic")->check(CLI::IsMember({"barycenter", "geodesic"}));

  auto* show = app.add_subcommand("show-config", "Print a config with all defaults filled in");
  std::string show_path;
  show->add_option("config", show_path, "Config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*show) {
      std::cout << wbary::serialize_config(wbary::parse_config(show_path));
      return 0;
    }
    auto cfg = wbary::parse_config(config_path);
    if (*tol_opt) cfg.tol = tol;
    if (*iter_opt) cfg.max_iter = max_iter;
    if (*out_opt) cfg.output_dir = out_dir;
    if (*snap_opt) cfg.snapshots = snapshots;
    if (*mode_opt) {
      const auto m = mode == "geodesic" ? wbary::RunMode::geodesic : wbary::RunMode::barycenter;
      if (m != cfg.mode && m == wbary::RunMode::barycenter) cfg.target.clear();
      cfg.mode = m;
    }
    return wbary::run(cfg, std::cout, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
