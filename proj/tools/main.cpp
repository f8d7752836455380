#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "ernn/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"equilibrium recurrent cells: training and analysis artifacts"};
  app.require_subcommand(1);

  ernn::CliOptions opt;
  const auto add = [&](const std::string& name, const std::string& desc) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", opt.config_path, "JSON config file (flat key paths)");
    sub->add_option("--out-dir", opt.out_dir, "directory for artifacts")->capture_default_str();
    sub->add_option("--seed", opt.seed, "override the config seed");
    return sub;
  };

  add("train", "fit a model; writes metrics.csv and checkpoint.json");
  add("phase-space", "2-d trajectories of vanilla/fastrnn/ernn on a shared walk");
  add("grad-flow", "spectral norms of d h_T / d h_n for ernn and vanilla");
  add("fixed-point", "per-iteration convergence against the Newton oracle");
  add("stability", "eigenvalues of dF/dh at sampled states");
  CLI::App* gradcheck = add("gradcheck", "finite-difference audit of all four cell kinds");
  gradcheck->add_flag("--corrupt-backward", opt.corrupt_backward)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  for (const CLI::App* sub : app.get_subcommands())
    return ernn::run_command(sub->get_name(), opt, std::cout, std::cerr);
  return 2;
}
