// Command line front end: argument parsing and exit-code mapping only; the
// work happens in the library. Exit codes: 0 success, 2 bad input or
// config, 3 estimation or runtime failure.

#include <exception>
#include <iostream>

#include "CLI11.hpp"

#include "itsa/cli.hpp"
#include "itsa/errors.hpp"
#include "itsa/version.hpp"

int main(int argc, char** argv) {
  CLI::App app{"interrupted time series toolkit: two-group segmented regression with "
               "autocorrelation-robust inference, plus a simulation harness"};
  app.set_version_flag("--version", itsa::kVersion);
  app.require_subcommand(1);

  itsa::FitOptions fit;
  CLI::App* fit_cmd = app.add_subcommand("fit", "fit a panel CSV and print coefficient tables");
  fit_cmd->add_option("input", fit.input, "panel CSV (columns unit_id,t,treated,post,y)")
      ->required();
  fit_cmd->add_option("--method", fit.method, "olsnw, pw or both")->capture_default_str();
  fit_cmd->add_option("--ar-order", fit.ar_order, "AR order for the pw fit")
      ->capture_default_str();
  fit_cmd->add_option("--lag", fit.lag,
                      "HAC truncation lag (default: automatic from the series length)");
  fit_cmd->add_option("--intervention", fit.intervention,
                      "first post-intervention period (default: inferred from post flags)");
  fit_cmd->add_option("--alpha", fit.alpha, "test level")->capture_default_str();
  fit_cmd->add_option("--out", fit.out, "also write the report to this file");

  itsa::SimulateOptions sim;
  CLI::App* sim_cmd =
      app.add_subcommand("simulate", "run a Monte Carlo grid from a JSON config");
  sim_cmd->add_option("config", sim.config, "JSON run configuration")->required();
  sim_cmd->add_option("--out", sim.out_dir, "output directory")->capture_default_str();
  sim_cmd->add_option("--threads", sim.threads,
                      "worker threads (default: ITSA_LAB_THREADS, then hardware)");
  sim_cmd->add_option("--replications", sim.replications, "override the config's replication count");
  sim_cmd->add_flag("--resume", sim.resume, "reuse finished conditions found in the output directory");

  itsa::DgpOptions dgp;
  CLI::App* dgp_cmd = app.add_subcommand("dgp", "generate a synthetic panel CSV");
  dgp_cmd->add_option("config", dgp.config, "JSON generator configuration");
  dgp_cmd->add_option("--example", dgp.example, "named preset (prediabetes)");
  dgp_cmd->add_option("--ar", dgp.ar, "AR order for the preset")->capture_default_str();
  dgp_cmd->add_option("--out", dgp.out, "output CSV path")->capture_default_str();
  dgp_cmd->add_option("--seed", dgp.seed, "override the seed");

  itsa::ExampleOptions ex;
  CLI::App* ex_cmd = app.add_subcommand(
      "example", "generate the glucose preset and compare both estimators");
  ex_cmd->add_option("--ar", ex.ar, "AR order 1, 2 or 3 (default: all three)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (fit_cmd->parsed()) return itsa::cmd_fit(fit, std::cout, std::cerr);
    if (sim_cmd->parsed()) return itsa::cmd_simulate(sim, std::cout, std::cerr);
    if (dgp_cmd->parsed()) return itsa::cmd_dgp(dgp, std::cout, std::cerr);
    if (ex_cmd->parsed()) return itsa::cmd_example(ex, std::cout, std::cerr);
  } catch (const itsa::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const itsa::EstimationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
