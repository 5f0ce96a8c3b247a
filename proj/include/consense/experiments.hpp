#pragma once

// Monte Carlo harness: ROC estimation, detection-sensitivity sweeps,
// fixed-threshold robustness, and convergence studies.
//
// Trial streams. H0 trial i draws from derive_stream(seed, 0, i) and H1
// trial j from derive_stream(seed, 1, j); convergence repetition r uses
// derive_stream(seed, 2, r). Because H0 measurements ignore the SNRs, H0
// trials are bit-identical across the points of an SNR sweep, and H1 trials
// at different SNRs share their underlying random numbers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "consense/consensus.hpp"
#include "consense/detection.hpp"
#include "consense/error.hpp"
#include "consense/format.hpp"
#include "consense/graph.hpp"
#include "consense/random.hpp"
#include "consense/sensing.hpp"

namespace consense {

struct UniformSnr {
  double db = 10.0;
};

/// User i gets lo + i (hi - lo) / (n - 1) dB.
struct RangeEvenSnr {
  double lo_db = 5.0;
  double hi_db = 9.0;
};

using SnrCondition = std::variant<UniformSnr, RangeEvenSnr>;

inline std::vector<SnrSpec> user_snrs(const SnrCondition& condition, std::size_t n) {
  std::vector<SnrSpec> out;
  out.reserve(n);
  if (const auto* u = std::get_if<UniformSnr>(&condition)) {
    for (std::size_t i = 0; i < n; ++i) out.push_back(SnrSpec::from_db(u->db));
    return out;
  }
  const auto& r = std::get<RangeEvenSnr>(condition);
  for (std::size_t i = 0; i < n; ++i) {
    const double step = n > 1 ? (r.hi_db - r.lo_db) / static_cast<double>(n - 1) : 0.0;
    out.push_back(SnrSpec::from_db(r.lo_db + static_cast<double>(i) * step));
  }
  return out;
}

inline std::string describe(const SnrCondition& condition) {
  if (const auto* u = std::get_if<UniformSnr>(&condition)) return "uniform " + format_real(u->db);
  const auto& r = std::get<RangeEvenSnr>(condition);
  return "range " + format_real(r.lo_db) + " " + format_real(r.hi_db);
}

struct ScenarioConfig {
  std::shared_ptr<const Topology> topology;
  unsigned m = DetectorConfig::kDefaultTimeBandwidth;
  SnrCondition snr = UniformSnr{10.0};
  WeightScheme scheme = LaplacianEpsilon{0.19};
  std::optional<LinkFailureModel> failure;
  StoppingRule stopping{};
  std::vector<Rule> rules{Rule{RuleKind::Consensus}, Rule{RuleKind::OrRule}};
  std::vector<double> thresholds_db{};
  std::size_t trials = 1;
  std::uint64_t seed = 0;
  double prior = 0.5;

  std::size_t n() const { return topology->node_count(); }
  std::size_t trials_h1() const { return static_cast<std::size_t>(std::floor(prior * static_cast<double>(trials) + 0.5)); }
  std::size_t trials_h0() const { return trials - trials_h1(); }

  bool has_rule(RuleKind kind) const {
    return std::any_of(rules.begin(), rules.end(), [kind](const Rule& r) { return r.kind == kind; });
  }

  void validate() const {
    if (!topology) throw InvalidArgument("scenario: no topology");
    if (trials < 1) throw InvalidArgument("scenario: trials must be >= 1");
    if (!(prior >= 0.0 && prior <= 1.0)) throw InvalidArgument("scenario: prior must lie in [0, 1]");
    if (thresholds_db.empty()) throw InvalidArgument("scenario: threshold grid is empty");
    if (!std::is_sorted(thresholds_db.begin(), thresholds_db.end())) {
      throw InvalidArgument("scenario: threshold grid must be sorted ascending");
    }
    if (const auto* r = std::get_if<RangeEvenSnr>(&snr); r && r->lo_db > r->hi_db) {
      throw InvalidArgument("scenario: SNR range has lo > hi");
    }
    if (rules.empty()) throw InvalidArgument("scenario: no decision rules");
    for (const Rule& rule : rules) {
      if (rule.kind == RuleKind::KOutOfN && (rule.k < 1 || rule.k > n())) {
        throw InvalidArgument("scenario: rule " + rule.name() + " needs 1 <= k <= n");
      }
    }
    if (m < 2) throw InvalidArgument("scenario: the Rayleigh H1 model requires m >= 2");
    if (has_rule(RuleKind::Consensus)) {
      validate_scheme(*topology, scheme);
      stopping.validate();
    }
  }
};

/// A binomial proportion estimate.
struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
  std::uint64_t trials_effective = 0;
  std::uint64_t count = 0;

  static Estimate from_counts(std::uint64_t count, std::uint64_t trials) {
    Estimate e;
    e.count = count;
    e.trials_effective = trials;
    if (trials > 0) {
      e.value = static_cast<double>(count) / static_cast<double>(trials);
      e.std_error = std::sqrt(e.value * (1.0 - e.value) / static_cast<double>(trials));
    }
    return e;
  }
};

// ---------------------------------------------------------------------------
// Single trial

struct TrialOutcome {
  GroundTruth truth = GroundTruth::H0;
  EnergyVector y;
  /// Per rule (parallel to cfg.rules): the rule decides Present iff statistic > lambda.
  std::vector<double> statistic;
  // Consensus diagnostics; zero/empty when the rule set has no consensus rule.
  std::size_t iterations = 0;
  bool converged = false;
  double exact_average = 0.0;
  std::vector<double> final_state;

  Decision decision(std::size_t rule_index, const Threshold& lambda) const {
    return decide_consensus(statistic.at(rule_index), lambda);
  }

  /// Nodes whose own finite-time decision differs from the exact-average decision.
  std::size_t disagreement(const Threshold& lambda) const {
    const Decision reference = decide_consensus(exact_average, lambda);
    return static_cast<std::size_t>(std::count_if(final_state.begin(), final_state.end(), [&](double v) {
      return decide_consensus(v, lambda) != reference;
    }));
  }
};

namespace detail {

/// k-th largest entry (k = 1 is the max).
inline double kth_largest(std::vector<double> v, std::size_t k) {
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k - 1), v.end(), std::greater<>());
  return v[k - 1];
}

struct TrialContext {
  const ScenarioConfig& cfg;
  std::vector<SnrSpec> snrs;
  DetectorConfig detector;
  std::optional<ConsensusRunner> runner;

  explicit TrialContext(const ScenarioConfig& c, const SnrCondition& condition)
      : cfg(c), snrs(user_snrs(condition, c.n())), detector(c.m) {
    if (c.has_rule(RuleKind::Consensus)) runner.emplace(*c.topology, c.scheme, c.failure, c.stopping);
  }

  TrialOutcome run(GroundTruth truth, RandomStream& rng) const {
    TrialOutcome out;
    out.truth = truth;
    out.y = measure_network(cfg.n(), truth, snrs, detector, rng);
    out.exact_average = std::accumulate(out.y.begin(), out.y.end(), 0.0) / static_cast<double>(out.y.size());
    if (runner) {
      RunResult run = runner->run(out.y, rng);
      out.iterations = run.iterations;
      out.converged = run.converged;
      out.final_state = std::move(run.final_state.x);
    }
    out.statistic.reserve(cfg.rules.size());
    for (const Rule& rule : cfg.rules) {
      switch (rule.kind) {
        case RuleKind::Consensus: out.statistic.push_back(out.final_state.front()); break;
        case RuleKind::OrRule: out.statistic.push_back(*std::max_element(out.y.begin(), out.y.end())); break;
        case RuleKind::KOutOfN: out.statistic.push_back(kth_largest(out.y, rule.k)); break;
        case RuleKind::Single: out.statistic.push_back(out.y.front()); break;
      }
    }
    return out;
  }
};

inline std::size_t resolve_threads(std::size_t threads) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  return threads;
}

/// Runs fn(worker, begin, end) over contiguous chunks of [0, count).
template <class Fn>
void parallel_chunks(std::size_t count, std::size_t threads, Fn&& fn) {
  threads = std::min(resolve_threads(threads), std::max<std::size_t>(count, 1));
  if (threads <= 1) {
    fn(std::size_t{0}, std::size_t{0}, count);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (std::size_t w = 0; w < threads; ++w) {
    const std::size_t begin = count * w / threads;
    const std::size_t end = count * (w + 1) / threads;
    pool.emplace_back([&, w, begin, end] {
      try {
        fn(w, begin, end);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace detail

/// One sensing round plus consensus and baseline decisions.
inline TrialOutcome run_trial(const ScenarioConfig& cfg, GroundTruth truth, RandomStream& rng) {
  cfg.validate();
  return detail::TrialContext(cfg, cfg.snr).run(truth, rng);
}

inline RandomStream trial_stream(std::uint64_t seed, GroundTruth truth, std::size_t index) {
  return derive_stream(seed, truth == GroundTruth::H0 ? 0u : 1u, index);
}

/// Integer tallies over all trials of one hypothesis.
struct HypothesisTally {
  std::uint64_t trials = 0;
  /// present[rule][threshold]: trials deciding Present.
  std::vector<std::vector<std::uint64_t>> present;
  /// Trials in which at least one node's decision differs from the exact-average decision.
  std::vector<std::uint64_t> disagreement_trials;
  std::uint64_t nonconverged = 0;
  std::uint64_t iteration_sum = 0;
  std::uint64_t iteration_max = 0;

  HypothesisTally(std::size_t rules, std::size_t thresholds)
      : present(rules, std::vector<std::uint64_t>(thresholds, 0)), disagreement_trials(thresholds, 0) {}

  void merge(const HypothesisTally& other) {
    trials += other.trials;
    for (std::size_t r = 0; r < present.size(); ++r) {
      for (std::size_t t = 0; t < present[r].size(); ++t) present[r][t] += other.present[r][t];
    }
    for (std::size_t t = 0; t < disagreement_trials.size(); ++t) disagreement_trials[t] += other.disagreement_trials[t];
    nonconverged += other.nonconverged;
    iteration_sum += other.iteration_sum;
    iteration_max = std::max(iteration_max, other.iteration_max);
  }
};

/// Simulates `trials` trials of one hypothesis under `condition` and tallies
/// decisions at each threshold (thresholds must be sorted ascending).
inline HypothesisTally simulate_hypothesis(const ScenarioConfig& cfg, const SnrCondition& condition, GroundTruth truth,
                                           std::size_t trials, std::span<const double> thresholds_db,
                                           std::size_t threads = 1) {
  if (!std::is_sorted(thresholds_db.begin(), thresholds_db.end())) {
    throw InvalidArgument("simulate: thresholds must be sorted ascending");
  }
  const detail::TrialContext context(cfg, condition);
  std::vector<double> linear(thresholds_db.size());
  std::transform(thresholds_db.begin(), thresholds_db.end(), linear.begin(),
                 [](double db) { return Threshold::from_db(db).linear(); });
  const bool consensus = cfg.has_rule(RuleKind::Consensus);

  const std::size_t workers = std::min(detail::resolve_threads(threads), std::max<std::size_t>(trials, 1));
  std::vector<HypothesisTally> partial(workers, HypothesisTally(cfg.rules.size(), thresholds_db.size()));
  detail::parallel_chunks(trials, workers, [&](std::size_t w, std::size_t begin, std::size_t end) {
    HypothesisTally& tally = partial[w];
    for (std::size_t i = begin; i < end; ++i) {
      RandomStream rng = trial_stream(cfg.seed, truth, i);
      const TrialOutcome out = context.run(truth, rng);
      ++tally.trials;
      for (std::size_t r = 0; r < out.statistic.size(); ++r) {
        // statistic > lambda holds for every threshold strictly below it.
        const auto above = static_cast<std::size_t>(
            std::lower_bound(linear.begin(), linear.end(), out.statistic[r]) - linear.begin());
        for (std::size_t t = 0; t < above; ++t) ++tally.present[r][t];
      }
      if (consensus) {
        tally.iteration_sum += out.iterations;
        tally.iteration_max = std::max<std::uint64_t>(tally.iteration_max, out.iterations);
        if (!out.converged) ++tally.nonconverged;
        const auto [lo, hi] = std::minmax_element(out.final_state.begin(), out.final_state.end());
        const double lo_v = std::min(*lo, out.exact_average);
        const double hi_v = std::max(*hi, out.exact_average);
        // Only thresholds inside [lo_v, hi_v) can split the nodes from the reference.
        auto t = static_cast<std::size_t>(std::lower_bound(linear.begin(), linear.end(), lo_v) - linear.begin());
        for (; t < linear.size() && linear[t] < hi_v; ++t) {
          if (out.disagreement(Threshold::from_db(thresholds_db[t])) > 0) ++tally.disagreement_trials[t];
        }
      }
    }
  });
  HypothesisTally total(cfg.rules.size(), thresholds_db.size());
  for (const auto& p : partial) total.merge(p);
  return total;
}

// ---------------------------------------------------------------------------
// ROC

struct RocPoint {
  double threshold_db = 0.0;
  Estimate pf;
  Estimate pm;
};

struct RocCurve {
  Rule rule;
  std::vector<RocPoint> points;
};

struct ConsensusDiagnostics {
  std::uint64_t trials_h0 = 0, trials_h1 = 0;
  std::uint64_t nonconverged_h0 = 0, nonconverged_h1 = 0;
  double mean_iterations_h0 = 0.0, mean_iterations_h1 = 0.0;
  std::uint64_t max_iterations_h0 = 0, max_iterations_h1 = 0;
  std::vector<double> thresholds_db;
  std::vector<std::uint64_t> disagreement_h0, disagreement_h1;
};

struct RocResult {
  std::vector<RocCurve> curves;
  std::optional<ConsensusDiagnostics> diagnostics;
};

namespace detail {

inline double mean_of(std::uint64_t sum, std::uint64_t n) {
  return n ? static_cast<double>(sum) / static_cast<double>(n) : 0.0;
}

inline RocResult assemble_roc(const ScenarioConfig& cfg, const HypothesisTally& h0, const HypothesisTally& h1) {
  RocResult result;
  for (std::size_t r = 0; r < cfg.rules.size(); ++r) {
    RocCurve curve{cfg.rules[r], {}};
    for (std::size_t t = 0; t < cfg.thresholds_db.size(); ++t) {
      curve.points.push_back(RocPoint{cfg.thresholds_db[t], Estimate::from_counts(h0.present[r][t], h0.trials),
                                      Estimate::from_counts(h1.trials - h1.present[r][t], h1.trials)});
    }
    result.curves.push_back(std::move(curve));
  }
  if (cfg.has_rule(RuleKind::Consensus)) {
    ConsensusDiagnostics d;
    d.trials_h0 = h0.trials;
    d.trials_h1 = h1.trials;
    d.nonconverged_h0 = h0.nonconverged;
    d.nonconverged_h1 = h1.nonconverged;
    d.mean_iterations_h0 = mean_of(h0.iteration_sum, h0.trials);
    d.mean_iterations_h1 = mean_of(h1.iteration_sum, h1.trials);
    d.max_iterations_h0 = h0.iteration_max;
    d.max_iterations_h1 = h1.iteration_max;
    d.thresholds_db = cfg.thresholds_db;
    d.disagreement_h0 = h0.disagreement_trials;
    d.disagreement_h1 = h1.disagreement_trials;
    result.diagnostics = std::move(d);
  }
  return result;
}

}  // namespace detail

/// P_f from the H0 trials and P_m from the H1 trials at every grid threshold.
inline RocResult estimate_roc(const ScenarioConfig& cfg, std::size_t threads = 1) {
  cfg.validate();
  const auto h0 = simulate_hypothesis(cfg, cfg.snr, GroundTruth::H0, cfg.trials_h0(), cfg.thresholds_db, threads);
  const auto h1 = simulate_hypothesis(cfg, cfg.snr, GroundTruth::H1, cfg.trials_h1(), cfg.thresholds_db, threads);
  return detail::assemble_roc(cfg, h0, h1);
}

/// First grid point (ascending threshold) whose P_f estimate is at or below `level`.
inline std::optional<RocPoint> first_point_with_pf_at_most(const RocCurve& curve, double level) {
  for (const RocPoint& p : curve.points) {
    if (p.pf.value <= level) return p;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Detection sensitivity: per-rule threshold calibrated to a P_f target.

struct SensitivityRow {
  Rule rule;
  double snr_db = 0.0;
  double lambda_db = 0.0;
  Estimate pd;
  Estimate pf;
};

struct SensitivityResult {
  std::vector<double> calibrated_lambda_db;  // parallel to cfg.rules
  std::vector<SensitivityRow> rows;
};

inline double calibrate_threshold_db(const Rule& rule, unsigned n, unsigned m, double pf_target) {
  return invert_pf_db([&](const Threshold& lambda) { return analytic_pf(rule, n, m, lambda); }, pf_target);
}

inline std::vector<double> make_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || hi < lo) throw InvalidArgument("grid: need lo <= hi and step > 0");
  std::vector<double> grid;
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  for (std::size_t i = 0; i < count; ++i) {
    // Round to 1e-9 dB so that grid values print cleanly.
    grid.push_back(std::round((lo + static_cast<double>(i) * step) * 1e9) / 1e9);
  }
  return grid;
}

/// Uniform-SNR sweep: for each grid SNR, P_d of every rule at its calibrated
/// threshold. cfg.trials is split by cfg.prior at every grid point.
inline SensitivityResult sweep_detection_sensitivity(const ScenarioConfig& cfg, double pf_target,
                                                     std::span<const double> snr_grid_db, std::size_t threads = 1) {
  cfg.validate();
  if (!(pf_target > 0.0 && pf_target < 1.0)) throw InvalidArgument("P_f target must lie in (0, 1)");
  if (snr_grid_db.empty()) throw InvalidArgument("sensitivity: empty SNR grid");
  const auto n = static_cast<unsigned>(cfg.n());
  SensitivityResult result;
  for (const Rule& rule : cfg.rules) result.calibrated_lambda_db.push_back(calibrate_threshold_db(rule, n, cfg.m, pf_target));

  // Evaluate every rule at every calibrated threshold; read off the diagonal.
  std::vector<std::size_t> order(cfg.rules.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return result.calibrated_lambda_db[a] < result.calibrated_lambda_db[b]; });
  std::vector<double> sorted_lambdas(order.size());
  std::vector<std::size_t> column(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    sorted_lambdas[i] = result.calibrated_lambda_db[order[i]];
    column[order[i]] = i;
  }

  const auto h0 = simulate_hypothesis(cfg, cfg.snr, GroundTruth::H0, cfg.trials_h0(), sorted_lambdas, threads);
  for (double snr_db : snr_grid_db) {
    const auto h1 = simulate_hypothesis(cfg, UniformSnr{snr_db}, GroundTruth::H1, cfg.trials_h1(), sorted_lambdas, threads);
    for (std::size_t r = 0; r < cfg.rules.size(); ++r) {
      const std::size_t c = column[r];
      result.rows.push_back(SensitivityRow{cfg.rules[r], snr_db, result.calibrated_lambda_db[r],
                                           Estimate::from_counts(h1.present[r][c], h1.trials),
                                           Estimate::from_counts(h0.present[r][c], h0.trials)});
    }
  }
  return result;
}

/// Smallest SNR on the sweep at which the rule's P_d reaches `level`,
/// linearly interpolated between neighbouring grid points.
inline std::optional<double> required_snr_db(const SensitivityResult& result, const Rule& rule, double level) {
  std::optional<std::pair<double, double>> previous;
  for (const SensitivityRow& row : result.rows) {
    if (!(row.rule == rule)) continue;
    if (row.pd.value >= level) {
      if (!previous) return row.snr_db;
      const auto [s0, p0] = *previous;
      if (row.pd.value == p0) return row.snr_db;
      return s0 + (level - p0) * (row.snr_db - s0) / (row.pd.value - p0);
    }
    previous = std::make_pair(row.snr_db, row.pd.value);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Fixed-threshold robustness

struct CapPm {
  double level = 1e-2;
};
struct CapPf {
  double level = 1e-1;
};
struct Balanced {
  double consensus_db = 11.0;
  double or_db = 13.6;
};
using RobustnessObjective = std::variant<CapPm, CapPf, Balanced>;

inline std::string describe(const RobustnessObjective& objective) {
  if (const auto* c = std::get_if<CapPm>(&objective)) return "cap_pm " + format_real(c->level);
  if (const auto* c = std::get_if<CapPf>(&objective)) return "cap_pf " + format_real(c->level);
  const auto& b = std::get<Balanced>(objective);
  return "balanced " + format_real(b.consensus_db) + " " + format_real(b.or_db);
}

struct RobustnessRow {
  Rule rule;
  double lambda_db = 0.0;
  double snr_db = 0.0;
  Estimate pm;
  Estimate pf;
};

struct RobustnessSummary {
  Rule rule;
  double lambda_db = 0.0;
  double worst_pm = 0.0;
  double worst_pf = 0.0;
};

struct RobustnessResult {
  std::vector<RobustnessSummary> summary;
  std::vector<RobustnessRow> rows;
};

/// One fixed threshold per rule, held across a uniform-SNR grid.
///   CapPm: the largest grid threshold whose worst-case P_m over the SNR grid
///          stays below the level (the feasible choice with the lowest P_f).
///   CapPf: the smallest grid threshold whose worst-case P_f is below the level.
///   Balanced: the supplied consensus and OR thresholds; other rules skipped.
inline RobustnessResult fixed_threshold_robustness(const ScenarioConfig& cfg, const RobustnessObjective& objective,
                                                   std::span<const double> snr_grid_db, std::size_t threads = 1) {
  cfg.validate();
  if (snr_grid_db.empty()) throw InvalidArgument("robustness: empty SNR grid");

  std::vector<double> thresholds = cfg.thresholds_db;
  if (const auto* b = std::get_if<Balanced>(&objective)) thresholds = {b->consensus_db, b->or_db};
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  const std::size_t T = thresholds.size();
  const std::size_t R = cfg.rules.size();

  const auto h0 = simulate_hypothesis(cfg, cfg.snr, GroundTruth::H0, cfg.trials_h0(), thresholds, threads);
  std::vector<HypothesisTally> h1;
  h1.reserve(snr_grid_db.size());
  for (double snr_db : snr_grid_db) {
    h1.push_back(simulate_hypothesis(cfg, UniformSnr{snr_db}, GroundTruth::H1, cfg.trials_h1(), thresholds, threads));
  }
  auto pm_at = [&](std::size_t g, std::size_t r, std::size_t t) {
    return Estimate::from_counts(h1[g].trials - h1[g].present[r][t], h1[g].trials);
  };
  auto pf_at = [&](std::size_t r, std::size_t t) { return Estimate::from_counts(h0.present[r][t], h0.trials); };
  auto worst_pm = [&](std::size_t r, std::size_t t) {
    double w = 0.0;
    for (std::size_t g = 0; g < h1.size(); ++g) w = std::max(w, pm_at(g, r, t).value);
    return w;
  };

  RobustnessResult result;
  for (std::size_t r = 0; r < R; ++r) {
    const Rule& rule = cfg.rules[r];
    std::optional<std::size_t> chosen;
    if (const auto* cap = std::get_if<CapPm>(&objective)) {
      for (std::size_t t = 0; t < T; ++t) {
        if (worst_pm(r, t) < cap->level) chosen = t;
      }
    } else if (const auto* cap = std::get_if<CapPf>(&objective)) {
      for (std::size_t t = 0; t < T && !chosen; ++t) {
        if (pf_at(r, t).value < cap->level) chosen = t;
      }
    } else {
      const auto& b = std::get<Balanced>(objective);
      double target = 0.0;
      if (rule.kind == RuleKind::Consensus) {
        target = b.consensus_db;
      } else if (rule.kind == RuleKind::OrRule) {
        target = b.or_db;
      } else {
        continue;
      }
      chosen = static_cast<std::size_t>(std::lower_bound(thresholds.begin(), thresholds.end(), target) - thresholds.begin());
    }
    if (!chosen) {
      throw InvalidArgument("robustness: objective '" + describe(objective) + "' infeasible for rule " + rule.name() +
                            " on the threshold grid");
    }
    const std::size_t t = *chosen;
    RobustnessSummary s{rule, thresholds[t], worst_pm(r, t), pf_at(r, t).value};
    result.summary.push_back(s);
    for (std::size_t g = 0; g < h1.size(); ++g) {
      result.rows.push_back(RobustnessRow{rule, thresholds[t], snr_grid_db[g], pm_at(g, r, t), pf_at(r, t)});
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Convergence study

struct ConvergenceRow {
  double epsilon = 0.0;
  double failure_probability = 0.0;
  std::size_t repetitions = 0;
  double median_iterations = 0.0;
  double mean_iterations = 0.0;
  std::size_t min_iterations = 0;
  std::size_t max_iterations = 0;
  std::size_t converged_runs = 0;
  std::vector<std::size_t> iterations;  // per repetition
  RunResult sample_trace;               // repetition 0 with history
};

inline double median(std::vector<std::size_t> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  if (values.size() % 2 == 1) return static_cast<double>(values[mid]);
  return 0.5 * (static_cast<double>(values[mid - 1]) + static_cast<double>(values[mid]));
}

/// Iterations to the SpreadDb criterion for each step size, starting from
/// measurements under `truth`. Repetition r starts from the same measurement
/// for every epsilon.
inline std::vector<ConvergenceRow> convergence_study(const ScenarioConfig& cfg, std::span<const double> epsilons,
                                                     std::size_t repetitions, GroundTruth truth = GroundTruth::H1,
                                                     std::size_t threads = 1) {
  if (!cfg.topology) throw InvalidArgument("convergence: no topology");
  if (cfg.stopping.mode != StoppingMode::SpreadDb) throw InvalidArgument("convergence study requires SpreadDb stopping");
  if (repetitions < 1) throw InvalidArgument("convergence: repetitions must be >= 1");
  const auto snrs = user_snrs(cfg.snr, cfg.n());
  const DetectorConfig detector(cfg.m);
  std::vector<ConvergenceRow> rows;
  for (double eps : epsilons) {
    const ConsensusRunner runner(*cfg.topology, LaplacianEpsilon{eps}, cfg.failure, cfg.stopping);
    ConvergenceRow row;
    row.epsilon = eps;
    row.failure_probability = cfg.failure ? cfg.failure->failure_probability() : 0.0;
    row.repetitions = repetitions;
    row.iterations.assign(repetitions, 0);
    std::vector<char> converged(repetitions, 0);
    detail::parallel_chunks(repetitions, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
      for (std::size_t r = begin; r < end; ++r) {
        RandomStream rng = derive_stream(cfg.seed, 2u, r);
        const EnergyVector y = measure_network(cfg.n(), truth, snrs, detector, rng);
        RunOptions options;
        options.record_history = r == 0;
        RunResult run = runner.run(y, rng, options);
        row.iterations[r] = run.iterations;
        converged[r] = run.converged ? 1 : 0;
        if (r == 0) row.sample_trace = std::move(run);
      }
    });
    row.median_iterations = median(row.iterations);
    row.mean_iterations = static_cast<double>(std::accumulate(row.iterations.begin(), row.iterations.end(), std::size_t{0})) /
                          static_cast<double>(repetitions);
    row.min_iterations = *std::min_element(row.iterations.begin(), row.iterations.end());
    row.max_iterations = *std::max_element(row.iterations.begin(), row.iterations.end());
    row.converged_runs = static_cast<std::size_t>(std::count(converged.begin(), converged.end(), 1));
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Output files. Header row first; every float with nine significant digits.

inline void write_roc_csv(std::ostream& out, const RocResult& roc) {
  out << "rule,threshold_db,pf,pf_stderr,pm,pm_stderr,trials_h0,trials_h1\n";
  for (const RocCurve& curve : roc.curves) {
    for (const RocPoint& p : curve.points) {
      out << curve.rule.name() << ',' << format_real(p.threshold_db) << ',' << format_real(p.pf.value) << ','
          << format_real(p.pf.std_error) << ',' << format_real(p.pm.value) << ',' << format_real(p.pm.std_error) << ','
          << p.pf.trials_effective << ',' << p.pm.trials_effective << '\n';
    }
  }
}

inline void write_consensus_diagnostics_csv(std::ostream& out, const ConsensusDiagnostics& d) {
  out << "hypothesis,trials,nonconverged,mean_iterations,max_iterations\n";
  out << "H0," << d.trials_h0 << ',' << d.nonconverged_h0 << ',' << format_real(d.mean_iterations_h0) << ','
      << d.max_iterations_h0 << '\n';
  out << "H1," << d.trials_h1 << ',' << d.nonconverged_h1 << ',' << format_real(d.mean_iterations_h1) << ','
      << d.max_iterations_h1 << '\n';
}

inline void write_disagreement_csv(std::ostream& out, const ConsensusDiagnostics& d) {
  out << "threshold_db,disagreement_trials_h0,disagreement_trials_h1,trials_h0,trials_h1\n";
  for (std::size_t t = 0; t < d.thresholds_db.size(); ++t) {
    out << format_real(d.thresholds_db[t]) << ',' << d.disagreement_h0[t] << ',' << d.disagreement_h1[t] << ','
        << d.trials_h0 << ',' << d.trials_h1 << '\n';
  }
}

inline void write_sensitivity_csv(std::ostream& out, const SensitivityResult& s) {
  out << "rule,snr_db,lambda_db,pd,pd_stderr,pf,pf_stderr,trials_h0,trials_h1\n";
  for (const SensitivityRow& r : s.rows) {
    out << r.rule.name() << ',' << format_real(r.snr_db) << ',' << format_real(r.lambda_db) << ','
        << format_real(r.pd.value) << ',' << format_real(r.pd.std_error) << ',' << format_real(r.pf.value) << ','
        << format_real(r.pf.std_error) << ',' << r.pf.trials_effective << ',' << r.pd.trials_effective << '\n';
  }
}

inline void write_robustness_csv(std::ostream& out, const RobustnessResult& r) {
  out << "rule,lambda_db,snr_db,pm,pm_stderr,pf,pf_stderr,trials_h0,trials_h1\n";
  for (const RobustnessRow& row : r.rows) {
    out << row.rule.name() << ',' << format_real(row.lambda_db) << ',' << format_real(row.snr_db) << ','
        << format_real(row.pm.value) << ',' << format_real(row.pm.std_error) << ',' << format_real(row.pf.value) << ','
        << format_real(row.pf.std_error) << ',' << row.pf.trials_effective << ',' << row.pm.trials_effective << '\n';
  }
}

inline void write_robustness_summary_csv(std::ostream& out, const RobustnessResult& r) {
  out << "rule,lambda_db,worst_pm,worst_pf\n";
  for (const RobustnessSummary& s : r.summary) {
    out << s.rule.name() << ',' << format_real(s.lambda_db) << ',' << format_real(s.worst_pm) << ','
        << format_real(s.worst_pf) << '\n';
  }
}

inline void write_convergence_csv(std::ostream& out, std::span<const ConvergenceRow> rows) {
  out << "epsilon,failure_probability,repetitions,median_iterations,mean_iterations,min_iterations,max_iterations,"
         "converged_runs\n";
  for (const ConvergenceRow& r : rows) {
    out << format_real(r.epsilon) << ',' << format_real(r.failure_probability) << ',' << r.repetitions << ','
        << format_real(r.median_iterations) << ',' << format_real(r.mean_iterations) << ',' << r.min_iterations << ','
        << r.max_iterations << ',' << r.converged_runs << '\n';
  }
}

}  // namespace consense
