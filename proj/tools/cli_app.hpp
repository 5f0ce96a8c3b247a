#pragma once

// Command-line front end: wires config files to experiment runs and output files.
// Exit status: 0 success, 1 usage or config error, 2 runtime failure.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "consense/consense.hpp"

namespace consense::cli {

enum ExitCode : int { kOk = 0, kConfigError = 1, kRuntimeError = 2 };

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  bool trace = false;
  std::size_t threads = 0;
};

namespace detail {

inline void add_common(CLI::App& sub, CommonOptions& opts, bool needs_config = true) {
  auto* config = sub.add_option("--config", opts.config_path, "Experiment config file");
  if (needs_config) config->required();
  sub.add_option("--seed", opts.seed, "Master seed (overrides the config)");
  sub.add_option("--out", opts.out_dir, "Output directory (created if missing)")->capture_default_str();
  sub.add_flag("--trace", opts.trace, "Also write per-run trace files");
  sub.add_option("--threads", opts.threads, "Worker threads, 0 = auto")->capture_default_str();
}

inline ExperimentConfig load(const CommonOptions& opts) {
  ExperimentConfig cfg = load_config(opts.config_path);
  if (opts.seed) cfg.scenario.seed = *opts.seed;
  return cfg;
}

inline std::filesystem::path prepare_out(const CommonOptions& opts) {
  std::filesystem::path dir(opts.out_dir);
  std::filesystem::create_directories(dir);
  return dir;
}

template <class Writer>
void write_file(const std::filesystem::path& path, Writer&& writer) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  writer(out);
  out.flush();
  if (!out) throw Error("write failed for " + path.string());
}

inline std::string epsilon_tag(double eps) {
  std::string s = format_real(eps);
  for (char& c : s) {
    if (c == '.') c = 'p';
  }
  return s;
}

}  // namespace detail

/// Runs one invocation; argv[0] is the program name.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Consensus-based cooperative spectrum sensing simulator", "consense"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  CommonOptions opts;

  auto* spectral = app.add_subcommand("spectral", "Laplacian spectrum, alpha, spectral gap and rho of a topology");
  std::string topology_path;
  std::optional<double> epsilon;
  std::optional<double> failure_p;
  spectral->add_option("--config", opts.config_path, "Config file ([network], [consensus] scheme and failure)");
  spectral->add_option("--topology", topology_path, "Topology file (instead of --config)");
  spectral->add_option("--epsilon", epsilon, "Laplacian step size (overrides the config)");
  spectral->add_option("--p", failure_p, "Link failure probability for rho (overrides the config)");
  spectral->add_option("--out", opts.out_dir, "Also write spectral.csv into this directory");
  spectral->add_flag("--trace", opts.trace, "Accepted for uniformity; no trace output");
  spectral->add_option("--seed", opts.seed, "Accepted for uniformity; unused");
  spectral->add_option("--threads", opts.threads, "Accepted for uniformity; unused");

  auto* converge = app.add_subcommand("converge", "Iterations to the dB spread criterion per step size");
  detail::add_common(*converge, opts);

  auto* roc = app.add_subcommand("roc", "P_f / P_m estimates across the threshold grid");
  detail::add_common(*roc, opts);

  auto* sensitivity = app.add_subcommand("sensitivity", "P_d vs SNR with thresholds calibrated to a P_f target");
  detail::add_common(*sensitivity, opts);

  auto* robustness = app.add_subcommand("robustness", "One fixed threshold per rule held across an SNR grid");
  detail::add_common(*robustness, opts);

  auto* oracle = app.add_subcommand("oracle", "Closed-form false-alarm probabilities");
  unsigned oracle_n = 10, oracle_m = 5;
  double oracle_lambda_db = 0.0;
  oracle->add_option("--n", oracle_n, "Number of users")->capture_default_str();
  oracle->add_option("--m", oracle_m, "Time-bandwidth product")->capture_default_str();
  oracle->add_option("--lambda-db", oracle_lambda_db, "Threshold in dB")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const CLI::App* culprit = &app;
    for (const auto* sub : app.get_subcommands()) culprit = sub;
    err << culprit->help();
    return kConfigError;
  }

  // Subcommand --help is handled by CLI11 via CallForHelp on the subcommand.
  try {
    if (spectral->parsed()) {
      std::shared_ptr<const Topology> topology;
      double eps = 0.0;
      std::optional<double> p = failure_p;
      if (!opts.config_path.empty()) {
        const ExperimentConfig cfg = load_config(opts.config_path);
        topology = cfg.scenario.topology;
        if (const auto* lap = std::get_if<LaplacianEpsilon>(&cfg.scenario.scheme)) eps = lap->epsilon;
        if (!p && cfg.scenario.failure) p = cfg.scenario.failure->failure_probability();
      } else if (!topology_path.empty()) {
        topology = std::make_shared<const Topology>(load_topology(topology_path));
      } else {
        err << "error: spectral needs --config or --topology\n" << spectral->help();
        return kConfigError;
      }
      if (epsilon) eps = *epsilon;
      if (!(eps > 0.0)) {
        err << "error: spectral needs a Laplacian step size (--epsilon or a 'laplacian <eps>' scheme)\n";
        return kConfigError;
      }
      const SpectralReport report = spectral_report(*topology, eps, p);
      write_spectral_report(out, report);
      if (spectral->count("--out") > 0) {
        const auto dir = detail::prepare_out(opts);
        detail::write_file(dir / "spectral.csv", [&](std::ostream& f) { write_spectral_report(f, report); });
      }
      return kOk;
    }

    if (oracle->parsed()) {
      const Threshold lambda = Threshold::from_db(oracle_lambda_db);
      out << "quantity,value\n";
      out << "lambda_linear," << format_real(lambda.linear()) << '\n';
      out << "pf_single," << format_real(analytic_pf_single(oracle_m, lambda)) << '\n';
      out << "pf_consensus," << format_real(analytic_pf_consensus(oracle_n, oracle_m, lambda)) << '\n';
      out << "pf_or," << format_real(analytic_pf_or(oracle_n, oracle_m, lambda)) << '\n';
      return kOk;
    }

    const ExperimentConfig cfg = detail::load(opts);
    const ScenarioConfig& sc = cfg.scenario;
    const auto dir = detail::prepare_out(opts);

    if (converge->parsed()) {
      err << "converge: " << cfg.convergence.epsilons.size() << " step sizes x " << cfg.convergence.repetitions
          << " repetitions\n";
      const auto rows = convergence_study(sc, cfg.convergence.epsilons, cfg.convergence.repetitions,
                                          cfg.convergence.truth, opts.threads);
      detail::write_file(dir / "convergence.csv", [&](std::ostream& f) { write_convergence_csv(f, rows); });
      if (opts.trace) {
        for (const auto& row : rows) {
          detail::write_file(dir / ("trace_eps_" + detail::epsilon_tag(row.epsilon) + ".csv"),
                             [&](std::ostream& f) { write_trace(f, row.sample_trace); });
        }
      }
      return kOk;
    }

    if (roc->parsed()) {
      err << "roc: " << sc.trials_h0() << " H0 + " << sc.trials_h1() << " H1 trials, " << sc.thresholds_db.size()
          << " thresholds\n";
      const RocResult result = estimate_roc(sc, opts.threads);
      detail::write_file(dir / "roc.csv", [&](std::ostream& f) { write_roc_csv(f, result); });
      if (result.diagnostics) {
        detail::write_file(dir / "consensus_diagnostics.csv",
                           [&](std::ostream& f) { write_consensus_diagnostics_csv(f, *result.diagnostics); });
        detail::write_file(dir / "disagreement.csv",
                           [&](std::ostream& f) { write_disagreement_csv(f, *result.diagnostics); });
      }
      if (opts.trace && sc.has_rule(RuleKind::Consensus)) {
        const auto snrs = user_snrs(sc.snr, sc.n());
        for (GroundTruth truth : {GroundTruth::H0, GroundTruth::H1}) {
          RandomStream rng = trial_stream(sc.seed, truth, 0);
          const EnergyVector y = measure_network(sc.n(), truth, snrs, DetectorConfig(sc.m), rng);
          RunOptions options;
          options.record_history = true;
          const RunResult run = run_to_consensus(y, *sc.topology, sc.scheme, sc.failure, sc.stopping, rng, options);
          detail::write_file(dir / (std::string("trace_") + (truth == GroundTruth::H0 ? "h0" : "h1") + ".csv"),
                             [&](std::ostream& f) { write_trace(f, run); });
        }
      }
      return kOk;
    }

    if (sensitivity->parsed()) {
      err << "sensitivity: " << cfg.sweep.snr_grid_db.size() << " SNR points, P_f target "
          << format_real(cfg.sweep.pf_target) << "\n";
      const SensitivityResult result = sweep_detection_sensitivity(sc, cfg.sweep.pf_target, cfg.sweep.snr_grid_db,
                                                                   opts.threads);
      detail::write_file(dir / "sensitivity.csv", [&](std::ostream& f) { write_sensitivity_csv(f, result); });
      detail::write_file(dir / "sensitivity_summary.csv", [&](std::ostream& f) {
        f << "rule,lambda_db,required_snr_db_pd_0.99\n";
        for (std::size_t r = 0; r < sc.rules.size(); ++r) {
          const auto need = required_snr_db(result, sc.rules[r], 0.99);
          f << sc.rules[r].name() << ',' << format_real(result.calibrated_lambda_db[r]) << ','
            << (need ? format_real(*need) : std::string("nan")) << '\n';
        }
      });
      return kOk;
    }

    if (robustness->parsed()) {
      err << "robustness: objective " << describe(cfg.sweep.objective) << ", " << cfg.sweep.snr_grid_db.size()
          << " SNR points\n";
      const RobustnessResult result = fixed_threshold_robustness(sc, cfg.sweep.objective, cfg.sweep.snr_grid_db,
                                                                 opts.threads);
      detail::write_file(dir / "robustness.csv", [&](std::ostream& f) { write_robustness_csv(f, result); });
      detail::write_file(dir / "robustness_summary.csv",
                         [&](std::ostream& f) { write_robustness_summary_csv(f, result); });
      return kOk;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kConfigError;
}

}  // namespace consense::cli
