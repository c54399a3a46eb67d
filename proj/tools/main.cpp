#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dpcwt/accountant.hpp"
#include "dpcwt/config.hpp"
#include "dpcwt/errors.hpp"
#include "dpcwt/experiment.hpp"

namespace {

// Exit codes: 0 success, 2 invalid config or arguments, 3 I/O failure,
// 4 runtime invariant breach.
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitRuntime = 4;

struct RunArgs {
  std::string config;
  std::string output_dir;
  std::int64_t seed = -1;
  bool dry_run = false;
  bool clip_sigma_over_b = false;
  bool postcheck = false;
  int parallel_arms = 1;
};

int do_run(const RunArgs& args) {
  dpcwt::ExperimentConfig config = dpcwt::load_config(args.config);

  // Precedence for the output directory: flag, then environment, then config.
  if (!args.output_dir.empty()) {
    config.output_dir = args.output_dir;
  } else if (const char* env = std::getenv("DPCWT_OUTPUT_DIR")) {
    if (*env) config.output_dir = env;
  }
  if (args.seed >= 0) config.seed = static_cast<std::uint64_t>(args.seed);
  if (args.clip_sigma_over_b) config.clip_sigma_over_b = true;
  if (args.postcheck) config.postcheck_exhaustion = true;
  config.validate();

  dpcwt::RunOptions options;
  options.dry_run = args.dry_run;
  options.parallel_arms = args.parallel_arms;

  const dpcwt::ExperimentResult result = dpcwt::run_experiment(config, options);
  if (!args.dry_run) {
    std::cout << "wrote report to " << (result.output_dir / "report.txt").string() << "\n";
    for (const dpcwt::ReportRow& row : result.rows) {
      char eps_text[32] = "n/a";
      if (std::isfinite(row.max_epsilon))
        std::snprintf(eps_text, sizeof eps_text, "%.4f", row.max_epsilon);
      std::printf("%-20s sites=%d auroc=%.4f epsilon=%s steps=%lld\n", row.mode.c_str(),
                  row.n_sites, row.auroc_value, eps_text, static_cast<long long>(row.steps));
    }
  }
  return 0;
}

int do_accountant(double q, double sigma, std::int64_t steps, double delta) {
  if (steps < 0) throw dpcwt::ConfigError("steps: must be >= 0");
  if (sigma == 0.0 && q > 0.0 && steps > 0)
    throw dpcwt::ConfigError(
        "sigma: zero noise with a positive sampling rate has unbounded privacy loss");
  dpcwt::RdpLedger ledger(dpcwt::OrderGrid::defaults(), q, sigma);
  ledger.accumulate(steps);
  const dpcwt::EpsilonResult eps = ledger.to_epsilon(delta);
  std::printf("epsilon = %.6f at order alpha = %d (q=%g, sigma=%g, steps=%lld, delta=%g)\n",
              eps.epsilon, eps.order, q, sigma, static_cast<long long>(steps), delta);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dpcwt: differentially private cyclical weight transfer experiments"};
  app.require_subcommand(1);

  RunArgs run_args;
  CLI::App* run = app.add_subcommand("run", "run the experiment grid from a config file");
  run->add_option("config", run_args.config, "config file path or preset name (eicu_like, tcga_like)")
      ->required();
  run->add_option("--output-dir", run_args.output_dir,
                  "override the output directory (or set DPCWT_OUTPUT_DIR)");
  run->add_option("--seed", run_args.seed, "override the master seed");
  run->add_flag("--dry-run", run_args.dry_run, "validate and print the resolved plan only");
  run->add_flag("--clip-sigma-over-b", run_args.clip_sigma_over_b,
                "set the clip norm to noise_multiplier / batch_size");
  run->add_flag("--fidelity-postcheck", run_args.postcheck,
                "check the budget after each step instead of projecting ahead");
  run->add_option("--parallel-arms", run_args.parallel_arms,
                  "run arms in up to N worker processes");

  double q = 0.0, sigma = 0.0, delta = 1e-5;
  std::int64_t steps = 0;
  CLI::App* acct = app.add_subcommand("accountant", "query the privacy accountant directly");
  acct->add_option("--q", q, "sampling rate b/|D|")->required();
  acct->add_option("--sigma", sigma, "noise multiplier")->required();
  acct->add_option("--steps", steps, "number of optimizer steps")->required();
  acct->add_option("--delta", delta, "delta of the (epsilon, delta) guarantee");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (run->parsed()) return do_run(run_args);
    return do_accountant(q, sigma, steps, delta);
  } catch (const dpcwt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const dpcwt::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
