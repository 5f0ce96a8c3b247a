#include <gtest/gtest.h>

#include <sstream>

#include "support.hpp"

using namespace consense;
using consense::testing::fixture10;

namespace {

ScenarioConfig base_config(std::size_t trials = 4000) {
  ScenarioConfig c;
  c.topology = std::make_shared<const Topology>(fixture10());
  c.thresholds_db = make_grid(9.0, 15.0, 0.5);
  c.trials = trials;
  c.seed = 7;
  return c;
}

std::string roc_text(const ScenarioConfig& c, std::size_t threads) {
  std::ostringstream os;
  write_roc_csv(os, estimate_roc(c, threads));
  return os.str();
}

}  // namespace

TEST(SnrConditions, EvenSpacing) {
  const auto u = user_snrs(UniformSnr{10}, 3);
  for (const auto& s : u) EXPECT_EQ(s.db(), 10.0);
  const auto r = user_snrs(RangeEvenSnr{5, 9}, 5);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(r[i].db(), 5.0 + static_cast<double>(i), 1e-12);
  EXPECT_EQ(user_snrs(RangeEvenSnr{5, 15}, 1)[0].db(), 5.0);
  EXPECT_EQ(describe(SnrCondition{RangeEvenSnr{5, 9}}), "range 5 9");
}

TEST(ScenarioConfig, TrialSplitAndValidation) {
  ScenarioConfig c = base_config(101);
  EXPECT_EQ(c.trials_h1() + c.trials_h0(), 101u);
  EXPECT_EQ(c.trials_h1(), 51u);
  c.prior = 0.0;
  EXPECT_EQ(c.trials_h1(), 0u);
  EXPECT_NO_THROW(c.validate());

  auto broken = [](auto mutate) {
    ScenarioConfig c = base_config();
    mutate(c);
    return c;
  };
  EXPECT_THROW(broken([](auto& c) { c.trials = 0; }).validate(), InvalidArgument);
  EXPECT_THROW(broken([](auto& c) { c.thresholds_db.clear(); }).validate(), InvalidArgument);
  EXPECT_THROW(broken([](auto& c) { c.thresholds_db = {12, 11}; }).validate(), InvalidArgument);
  EXPECT_THROW(broken([](auto& c) { c.snr = RangeEvenSnr{9, 5}; }).validate(), InvalidArgument);
  EXPECT_THROW(broken([](auto& c) { c.rules = {Rule{RuleKind::KOutOfN, 11}}; }).validate(), InvalidArgument);
  EXPECT_THROW(broken([](auto& c) { c.scheme = LaplacianEpsilon{0.2}; }).validate(), InvalidArgument);
  EXPECT_THROW(broken([](auto& c) { c.prior = 1.5; }).validate(), InvalidArgument);
  EXPECT_THROW(broken([](auto& c) { c.topology.reset(); }).validate(), InvalidArgument);
}

TEST(Estimate, FromCounts) {
  const Estimate e = Estimate::from_counts(25, 100);
  EXPECT_DOUBLE_EQ(e.value, 0.25);
  EXPECT_DOUBLE_EQ(e.std_error, std::sqrt(0.25 * 0.75 / 100));
  EXPECT_EQ(e.trials_effective, 100u);
  EXPECT_EQ(Estimate::from_counts(0, 0).value, 0.0);
}

TEST(RunTrial, ExtremeThresholdsAndSnr) {
  ScenarioConfig c = base_config();
  c.rules = {Rule{RuleKind::Consensus}, Rule{RuleKind::OrRule}, Rule{RuleKind::KOutOfN, 3}, Rule{RuleKind::Single}};
  RandomStream rng = derive_stream(60u);
  const Threshold high = Threshold::from_db(40.0);
  for (int i = 0; i < 50; ++i) {
    const TrialOutcome out = run_trial(c, GroundTruth::H0, rng);
    for (std::size_t r = 0; r < c.rules.size(); ++r) EXPECT_EQ(out.decision(r, high), Decision::Absent);
    EXPECT_TRUE(out.converged);
    EXPECT_NEAR(out.statistic[0], out.exact_average, 1e-9 * out.exact_average);
  }
  c.snr = UniformSnr{40.0};
  const Threshold mid = Threshold::from_db(12.0);
  for (int i = 0; i < 50; ++i) {
    const TrialOutcome out = run_trial(c, GroundTruth::H1, rng);
    for (std::size_t r = 0; r < c.rules.size(); ++r) EXPECT_EQ(out.decision(r, mid), Decision::Present);
  }
}

TEST(RunTrial, StatisticsPerRule) {
  ScenarioConfig c = base_config();
  c.rules = {Rule{RuleKind::OrRule}, Rule{RuleKind::KOutOfN, 3}, Rule{RuleKind::Single}};
  RandomStream rng = derive_stream(61u);
  const TrialOutcome out = run_trial(c, GroundTruth::H1, rng);
  std::vector<double> sorted = out.y;
  std::sort(sorted.rbegin(), sorted.rend());
  EXPECT_EQ(out.statistic[0], sorted[0]);
  EXPECT_EQ(out.statistic[1], sorted[2]);
  EXPECT_EQ(out.statistic[2], out.y[0]);
  EXPECT_TRUE(out.final_state.empty());
}

TEST(RunTrial, DoubleExecutionIsIdentical) {
  ScenarioConfig c = base_config();
  c.failure = LinkFailureModel(0.4);
  for (GroundTruth h : {GroundTruth::H0, GroundTruth::H1}) {
    RandomStream a = trial_stream(c.seed, h, 3), b = trial_stream(c.seed, h, 3);
    const TrialOutcome x = run_trial(c, h, a), y = run_trial(c, h, b);
    EXPECT_EQ(x.y, y.y);
    EXPECT_EQ(x.statistic, y.statistic);
    EXPECT_EQ(x.final_state, y.final_state);
  }
}

TEST(Roc, ShapeMonotonicityAndOracle) {
  ScenarioConfig c = base_config(20000);
  const RocResult roc = estimate_roc(c);
  ASSERT_EQ(roc.curves.size(), 2u);
  ASSERT_TRUE(roc.diagnostics.has_value());
  EXPECT_EQ(roc.diagnostics->nonconverged_h0 + roc.diagnostics->nonconverged_h1, 0u);
  for (const RocCurve& curve : roc.curves) {
    ASSERT_EQ(curve.points.size(), c.thresholds_db.size());
    for (std::size_t i = 0; i < curve.points.size(); ++i) {
      const RocPoint& p = curve.points[i];
      EXPECT_EQ(p.pf.trials_effective, c.trials_h0());
      EXPECT_EQ(p.pm.trials_effective, c.trials_h1());
      // Common trials across thresholds: exact monotonicity.
      if (i > 0) {
        EXPECT_LE(p.pf.value, curve.points[i - 1].pf.value);
        EXPECT_GE(p.pm.value, curve.points[i - 1].pm.value);
      }
      const double oracle = analytic_pf(curve.rule, 10, 5, Threshold::from_db(p.threshold_db));
      EXPECT_NEAR(p.pf.value, oracle, 3 * std::sqrt(oracle * (1 - oracle) / p.pf.trials_effective) + 1e-12)
          << curve.rule.name() << " " << p.threshold_db;
    }
  }
  const auto first = first_point_with_pf_at_most(roc.curves[1], 0.05);
  ASSERT_TRUE(first.has_value());
  EXPECT_LE(first->pf.value, 0.05);
  EXPECT_FALSE(first_point_with_pf_at_most(roc.curves[1], -1.0).has_value());
}

TEST(Roc, ThreadCountDoesNotChangeResults) {
  ScenarioConfig c = base_config(3000);
  c.failure = LinkFailureModel(0.3);
  const std::string one = roc_text(c, 1);
  EXPECT_EQ(one, roc_text(c, 3));
  EXPECT_EQ(one, roc_text(c, 0));
  c.seed = 8;
  EXPECT_NE(one, roc_text(c, 1));
}

TEST(Roc, ConsensusDecisionsIndependentOfTopology) {
  ScenarioConfig a = base_config(4000);
  a.rules = {Rule{RuleKind::Consensus}};
  a.thresholds_db = make_grid(9.0, 14.0, 0.1);
  ScenarioConfig b = a;
  std::vector<std::pair<NodeId, NodeId>> ring;
  for (NodeId i = 0; i < 10; ++i) ring.emplace_back(i, (i + 1) % 10);
  b.topology = std::make_shared<const Topology>(Topology(10, ring));
  b.scheme = Metropolis{};
  const RocResult ra = estimate_roc(a), rb = estimate_roc(b);
  for (std::size_t t = 0; t < a.thresholds_db.size(); ++t) {
    EXPECT_EQ(ra.curves[0].points[t].pf.count, rb.curves[0].points[t].pf.count);
    EXPECT_EQ(ra.curves[0].points[t].pm.count, rb.curves[0].points[t].pm.count);
  }
}

TEST(Roc, SpreadStoppingReportsDisagreement) {
  ScenarioConfig c = base_config(4000);
  c.stopping.mode = StoppingMode::SpreadDb;
  const RocResult roc = estimate_roc(c);
  ASSERT_TRUE(roc.diagnostics.has_value());
  std::uint64_t total = 0;
  for (auto v : roc.diagnostics->disagreement_h1) total += v;
  EXPECT_GT(total, 0u);
  EXPECT_LT(roc.diagnostics->mean_iterations_h1, 20.0);
  ScenarioConfig exact = base_config(4000);
  const RocResult e = estimate_roc(exact);
  for (auto v : e.diagnostics->disagreement_h0) EXPECT_EQ(v, 0u);
}

TEST(Roc, CsvFormat) {
  ScenarioConfig c = base_config(200);
  c.thresholds_db = {10.0, 12.5};
  std::ostringstream os;
  write_roc_csv(os, estimate_roc(c));
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "rule,threshold_db,pf,pf_stderr,pm,pm_stderr,trials_h0,trials_h1");
  std::vector<std::string> rows;
  while (std::getline(in, line)) rows.push_back(line);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].rfind("consensus,10,", 0), 0u);
  EXPECT_EQ(rows[3].rfind("or,12.5,", 0), 0u);
  EXPECT_NE(rows[0].find(",100,100"), std::string::npos);
}

TEST(Grid, Construction) {
  const auto g = make_grid(5.0, 10.0, 0.2);
  ASSERT_EQ(g.size(), 26u);
  EXPECT_EQ(g.front(), 5.0);
  EXPECT_EQ(g.back(), 10.0);
  EXPECT_EQ(g[3], 5.6);
  EXPECT_THROW(make_grid(1, 0, 0.1), InvalidArgument);
  EXPECT_THROW(make_grid(0, 1, 0), InvalidArgument);
}

TEST(Sensitivity, CalibratedFalseAlarmAndMonotonePd) {
  ScenarioConfig c = base_config(20000);
  const auto grid = make_grid(5.0, 10.0, 1.0);
  const SensitivityResult s = sweep_detection_sensitivity(c, 0.1, grid);
  ASSERT_EQ(s.calibrated_lambda_db.size(), 2u);
  EXPECT_NEAR(s.calibrated_lambda_db[0], 10.737, 1e-3);
  EXPECT_NEAR(s.calibrated_lambda_db[1], 13.631, 1e-3);
  ASSERT_EQ(s.rows.size(), 2 * grid.size());
  double prev[2] = {0, 0};
  for (std::size_t i = 0; i < s.rows.size(); ++i) {
    const SensitivityRow& row = s.rows[i];
    EXPECT_NEAR(row.pf.value, 0.1, 3 * std::sqrt(0.09 / row.pf.trials_effective));
    EXPECT_GE(row.pd.value, prev[i % 2]);
    prev[i % 2] = row.pd.value;
  }
  const auto need = required_snr_db(s, Rule{RuleKind::Consensus}, 0.9);
  ASSERT_TRUE(need.has_value());
  EXPECT_GE(*need, 5.0);
  EXPECT_FALSE(required_snr_db(s, Rule{RuleKind::Consensus}, 1.01).has_value());
  EXPECT_THROW(sweep_detection_sensitivity(c, 1.0, grid), InvalidArgument);
  EXPECT_THROW(sweep_detection_sensitivity(c, 0.1, std::vector<double>{}), InvalidArgument);
}

TEST(Robustness, ObjectivesPickExpectedThresholds) {
  ScenarioConfig c = base_config(20000);
  c.thresholds_db = make_grid(9.0, 16.0, 0.1);
  const auto grid = make_grid(5.0, 10.0, 1.0);
  const RobustnessResult cap_pm = fixed_threshold_robustness(c, CapPm{0.05}, grid);
  ASSERT_EQ(cap_pm.summary.size(), 2u);
  for (const auto& s : cap_pm.summary) {
    EXPECT_LT(s.worst_pm, 0.05);
    // Largest feasible threshold: the next grid value must violate the cap.
    ScenarioConfig next = c;
    next.rules = {s.rule};
    next.thresholds_db = {s.lambda_db + 0.1};
    if (s.lambda_db + 0.1 <= c.thresholds_db.back()) {
      EXPECT_GE(fixed_threshold_robustness(next, Balanced{s.lambda_db + 0.1, s.lambda_db + 0.1}, grid).summary[0].worst_pm,
                0.05);
    }
  }
  const RobustnessResult cap_pf = fixed_threshold_robustness(c, CapPf{0.1}, grid);
  for (const auto& s : cap_pf.summary) EXPECT_LT(s.worst_pf, 0.1);
  EXPECT_LT(cap_pf.summary[0].lambda_db, cap_pf.summary[1].lambda_db);

  const RobustnessResult bal = fixed_threshold_robustness(c, Balanced{11.0, 13.6}, grid);
  ASSERT_EQ(bal.summary.size(), 2u);
  EXPECT_EQ(bal.summary[0].lambda_db, 11.0);
  EXPECT_EQ(bal.summary[1].lambda_db, 13.6);
  EXPECT_EQ(bal.rows.size(), 2 * grid.size());

  EXPECT_THROW(fixed_threshold_robustness(c, CapPm{0.0}, grid), InvalidArgument);
  EXPECT_EQ(describe(RobustnessObjective{Balanced{11, 13.6}}), "balanced 11 13.6");
}

TEST(Convergence, StudyOrdering) {
  ScenarioConfig c = base_config();
  c.stopping.mode = StoppingMode::SpreadDb;
  const std::vector<double> eps{0.1, 0.19};
  const auto fixed = convergence_study(c, eps, 150);
  ASSERT_EQ(fixed.size(), 2u);
  EXPECT_LT(fixed[1].median_iterations, fixed[0].median_iterations);
  EXPECT_EQ(fixed[0].converged_runs, 150u);
  EXPECT_FALSE(fixed[0].sample_trace.history.empty());
  c.failure = LinkFailureModel(0.4);
  const auto failing = convergence_study(c, eps, 150);
  EXPECT_GT(failing[1].median_iterations, fixed[1].median_iterations);
  EXPECT_EQ(failing[1].failure_probability, 0.4);
  std::ostringstream os;
  write_convergence_csv(os, failing);
  EXPECT_EQ(os.str().rfind("epsilon,failure_probability,repetitions,median_iterations,", 0), 0u);

  ScenarioConfig exact = base_config();
  EXPECT_THROW(convergence_study(exact, eps, 10), InvalidArgument);
  EXPECT_THROW(convergence_study(c, eps, 0), InvalidArgument);
}

TEST(Median, EvenAndOdd) {
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 2, 3}), 2.5);
  EXPECT_EQ(median({}), 0.0);
}
