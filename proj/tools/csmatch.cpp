// Command-line front end: seeded simulation runs, parameter sweeps, the
// closed-form oracles, and mixing-matrix certification, all emitting
// deterministic plot-ready CSV.

#include <cstdio>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "csmatch/degroot_mixing.hpp"
#include "csmatch/experiment_io.hpp"
#include "csmatch/simulation_runner.hpp"
#include "csmatch/theory_oracles.hpp"
#include "csmatch/version.hpp"

namespace {

int run_guarded(const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const csmatch::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const csmatch::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"client-server matching game simulator and analysis toolkit"};
  app.set_version_flag("--version", csmatch::kVersion);
  app.require_subcommand(1);

  // --- run ---
  std::string run_config, run_out = "out";
  std::optional<std::uint64_t> run_seed;
  auto* run = app.add_subcommand("run", "execute one experiment and write timeseries.csv");
  run->add_option("--config", run_config, "experiment config file")->required();
  run->add_option("--out", run_out, "output directory (CSMATCH_OUTDIR overrides)");
  run->add_option("--seed", run_seed, "override the config seed");

  // --- sweep ---
  std::string sweep_config, sweep_param, sweep_out = "out";
  std::vector<double> sweep_values;
  std::optional<std::uint64_t> sweep_seed;
  auto* swp = app.add_subcommand("sweep", "run one experiment per parameter value");
  swp->add_option("--config", sweep_config, "experiment config file")->required();
  swp->add_option("--param", sweep_param, "swept parameter: split|s|f|m")->required();
  swp->add_option("--values", sweep_values, "parameter values")->required()->delimiter(',');
  swp->add_option("--out", sweep_out, "output directory (CSMATCH_OUTDIR overrides)");
  swp->add_option("--seed", sweep_seed, "override the config seed");

  // --- theory ---
  auto* theory = app.add_subcommand("theory", "closed-form predictions");
  theory->require_subcommand(1);
  double lambda = 1.0;
  auto* poisson = theory->add_subcommand("poisson", "idle-server probability exp(-lambda)");
  poisson->add_option("--lambda", lambda, "clients-per-server ratio");
  int horizon = 10;
  std::string recursion_out;
  auto* recursion = theory->add_subcommand("recursion", "pin-on-success occupancy recursion");
  recursion->add_option("--horizon", horizon, "number of slices");
  recursion->add_option("--out", recursion_out, "write CSV here instead of stdout");
  auto* limit = theory->add_subcommand("limit", "limiting utilization interval");

  // --- mixing ---
  std::string weights_path, start_path, json_path;
  double mix_tol = 1e-10;
  int mix_max_iter = 100000;
  auto* mixing = app.add_subcommand("mixing", "certify mixing-matrix convergence");
  mixing->add_option("--weights", weights_path, "sparse-triple weight matrix file")->required();
  mixing->add_option("--start", start_path, "optional starting strategy vector file");
  mixing->add_option("--tol", mix_tol, "convergence tolerance");
  mixing->add_option("--max-iter", mix_max_iter, "iteration cap");
  mixing->add_option("--json", json_path, "also write the report as JSON");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed())
    return run_guarded([&] { csmatch::io::cmd_run(run_config, run_out, run_seed); });

  if (swp->parsed())
    return run_guarded(
        [&] { csmatch::io::cmd_sweep(sweep_config, sweep_param, sweep_values, sweep_out, sweep_seed); });

  if (theory->parsed()) {
    if (poisson->parsed())
      return run_guarded([&] {
        std::printf("%s\n", csmatch::io::format_fraction(csmatch::poisson_idle_probability(lambda)).c_str());
      });
    if (recursion->parsed())
      return run_guarded([&] {
        const csmatch::RecursionTrace trace = csmatch::strategy1_recursion(horizon);
        const std::string csv = csmatch::io::write_recursion_csv(trace);
        if (recursion_out.empty())
          std::fputs(csv.c_str(), stdout);
        else
          csmatch::io::write_file(recursion_out, csv);
      });
    if (limit->parsed()) {
      const auto [lo, hi] = csmatch::strategy1_limit_interval();
      std::printf("[%g, %g]\n", lo, hi);
      return 0;
    }
  }

  if (mixing->parsed())
    return run_guarded([&] {
      const csmatch::WeightMatrix w = csmatch::WeightMatrix::parse(csmatch::io::read_file(weights_path));
      csmatch::CertifyOptions opts;
      opts.tol = mix_tol;
      opts.max_iter = mix_max_iter;
      const csmatch::CertificationReport report = csmatch::certify_uniform_consensus(w, opts);
      std::fputs(csmatch::io::certification_to_text(report).c_str(), stdout);
      if (!start_path.empty()) {
        const csmatch::FlatStrategyVector p0 =
            csmatch::io::parse_flat_vector(csmatch::io::read_file(start_path));
        const csmatch::IterateResult res = csmatch::iterate(w, p0, mix_tol, mix_max_iter);
        std::printf("start vector: %s after %d iteration(s), max deviation from 1/n %g\n",
                    res.converged ? "converged" : "did not converge", res.iterations,
                    res.final.max_dev_from_uniform());
      }
      if (!json_path.empty())
        csmatch::io::write_file(json_path, csmatch::io::certification_to_json(report).dump(2) + "\n");
    });

  return 0;
}
