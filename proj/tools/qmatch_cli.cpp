// qmatch run --config FILE [--out DIR] [--seed N] [--full-batch] [--timing]
// qmatch verify {inverse-map|variance|gradients|wasserstein} [options]
//
// Exit codes: 0 success, 1 property failure, 2 usage or config error.
// Errors are reported as a single JSON object on stdout.

#include <chrono>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "qmatch/experiment.hpp"
#include "qmatch/kernels.hpp"
#include "qmatch/verify.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kPropertyFailure = 1;
constexpr int kUsage = 2;

int fail(int code, const std::string& kind, const std::string& message) {
  nlohmann::json err{{"status", "error"}, {"kind", kind}, {"message", message}, {"exit_code", code}};
  std::cout << err.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantile-matching adaptation experiments and property checks"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed_override;
  bool full_batch = false;
  bool timing = false;
  auto* run = app.add_subcommand("run", "Run an experiment from a config file");
  run->add_option("--config", config_path, "Experiment config")->required();
  run->add_option("--out", out_dir, "Output directory (overrides config)");
  run->add_option("--seed", seed_override, "Training seed (overrides config)");
  run->add_flag("--full-batch", full_batch, "Force full-batch training");
  run->add_flag("--timing", timing, "Record wall-clock time in trace.csv");

  std::uint64_t vseed = 0;
  std::size_t trials = 100, n = 8, b = 3, instances = 50;
  auto* verify = app.add_subcommand("verify", "Run a property suite");
  verify->require_subcommand(1);
  auto* v_inv = verify->add_subcommand("inverse-map", "Solver fixed point U(Q(u)) = u");
  v_inv->add_option("--trials", trials)->check(CLI::PositiveNumber);
  v_inv->add_option("--seed", vseed);
  auto* v_var = verify->add_subcommand("variance", "Memory-bank estimator bias and variance");
  v_var->add_option("--n", n)->check(CLI::Range(2, 64));
  v_var->add_option("--b", b)->check(CLI::PositiveNumber);
  v_var->add_option("--seed", vseed);
  auto* v_grad = verify->add_subcommand("gradients", "Analytic vs finite-difference gradients");
  v_grad->add_option("--instances", instances)->check(CLI::PositiveNumber);
  v_grad->add_option("--seed", vseed);
  auto* v_w2 = verify->add_subcommand("wasserstein", "Exact transport against brute force");
  v_w2->add_option("--trials", trials)->check(CLI::PositiveNumber);
  v_w2->add_option("--seed", vseed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kUsage, "usage", e.what());
  }

  if (*run) {
    qmatch::ExperimentSpec spec;
    try {
      spec = qmatch::load_experiment_spec(config_path);
    } catch (const qmatch::ConfigError& e) {
      return fail(kUsage, "config", e.what());
    }
    if (!out_dir.empty()) spec.output_dir = out_dir;
    if (seed_override) spec.train.seed = *seed_override;
    if (full_batch) spec.train.full_batch = true;
    if (timing) spec.record_wall_time = spec.train.record_wall_time = true;
    try {
      const auto outcome = qmatch::run_experiment(spec);
      const auto& fin = outcome.result.trace.final_record();
      nlohmann::json ok{{"status", "ok"},
                        {"trace", outcome.trace_path.string()},
                        {"summary", outcome.summary_path.string()},
                        {"final_quantile_loss", fin.quantile_loss},
                        {"mse_plateau", outcome.mse_plateau}};
      std::cout << ok.dump() << std::endl;
      return kOk;
    } catch (const qmatch::ConfigError& e) {
      return fail(kUsage, "config", e.what());
    } catch (const std::invalid_argument& e) {
      // Covers InvalidArgument and DimensionMismatch raised while validating
      // the assembled experiment.
      return fail(kUsage, "config", e.what());
    } catch (const std::exception& e) {
      return fail(kPropertyFailure, "runtime", e.what());
    }
  }

  try {
    qmatch::verify::SuiteReport report;
    if (*v_inv) report = qmatch::verify::inverse_map(trials, vseed);
    else if (*v_var) report = qmatch::verify::variance(n, b, vseed);
    else if (*v_grad) report = qmatch::verify::gradients(instances, vseed);
    else report = qmatch::verify::wasserstein(trials, vseed);
    std::cout << "kernels: " << qmatch::kernels::isa_name(qmatch::kernels::active().isa) << '\n';
    qmatch::verify::print(std::cout, report);
    return report.all_passed() ? kOk : kPropertyFailure;
  } catch (const std::invalid_argument& e) {
    return fail(kUsage, "usage", e.what());
  } catch (const std::exception& e) {
    return fail(kPropertyFailure, "runtime", e.what());
  }
}
