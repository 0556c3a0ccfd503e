#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "pbrs/tabular.hpp"

using namespace pbrs;
using namespace pbrs::tabular;

namespace {

// Discounted return of following a fixed deterministic policy from `s`,
// including the geometric tail when the walk cycles.
double policy_value(const Gridworld& w, const std::vector<int>& pi, int s, double gamma) {
  std::vector<int> seen_at(w.num_states(), -1);
  std::vector<double> rewards;
  int k = 0;
  while (!w.terminal(s) && seen_at[s] < 0) {
    seen_at[s] = k++;
    const int next = w.next_state(s, pi[s]);
    rewards.push_back(w.reward(next, gamma));
    s = next;
  }
  double prefix = 0.0, disc = 1.0;
  const int loop_start = w.terminal(s) ? k : seen_at[s];
  for (int i = 0; i < loop_start; ++i) {
    prefix += disc * rewards[i];
    disc *= gamma;
  }
  if (w.terminal(s)) return prefix;
  double cycle = 0.0, cdisc = 1.0;
  for (int i = loop_start; i < k; ++i) {
    cycle += cdisc * rewards[i];
    cdisc *= gamma;
  }
  return prefix + disc * cycle / (1.0 - cdisc);
}

}  // namespace

TEST(Tabular, QUpdateExamples) {
  QTable q = QTable::zeros(2);
  q_update(q, 0, kRight, 1.0, 1, 0.08, 0.9, 0.0);
  EXPECT_DOUBLE_EQ(q.q[0][kRight], 0.08);

  QTable fixed = QTable::zeros(2);
  fixed.q[1] = {2.0, 1.0, 0.0, -1.0};
  fixed.q[0][kUp] = 0.9 * 2.0;
  const double before = fixed.q[0][kUp];
  q_update(fixed, 0, kUp, 0.0, 1, 0.08, 0.9, 0.0);
  EXPECT_EQ(fixed.q[0][kUp], before);

  QTable a = QTable::zeros(2), b = QTable::zeros(2);
  q_update(a, 0, kDown, -1.0, 1, 0.08, 0.9, 0.5);
  q_update(b, 0, kDown, -1.0, 1, 0.08, 0.9, 0.0);
  EXPECT_NEAR(a.q[0][kDown] - b.q[0][kDown], 0.04, 1e-15);
}

TEST(Tabular, UnshapedUpdateIsShapedWithZeroF) {
  SplitMix64 rng(1);
  QTable a = QTable::zeros(25), b = QTable::zeros(25);
  for (int i = 0; i < 5000; ++i) {
    const int s = static_cast<int>(rng.below(25)), s2 = static_cast<int>(rng.below(25));
    const int act = static_cast<int>(rng.below(4));
    const double r = rng.uniform(-1, 1);
    q_update_unshaped(a, s, act, r, s2, 0.08, 0.9);
    q_update(b, s, act, r, s2, 0.08, 0.9, 0.0);
  }
  EXPECT_EQ(a.q, b.q);
}

TEST(Tabular, OneStepWorld) {
  Gridworld w;
  w.width = 2;
  w.height = 1;
  w.start = {0, 0};
  w.goal = {1, 0};
  const ValueIterationResult vi = value_iteration(w, 0.9);
  EXPECT_NEAR(vi.values[w.start_state()], 8.0, 1e-10);
  EXPECT_EQ(vi.values[w.goal_state()], 0.0);
  EXPECT_EQ(vi.policy[w.start_state()], kRight);
}

TEST(Tabular, BruteForceMatchesValueIteration) {
  Gridworld w;
  w.width = 3;
  w.height = 3;
  w.goal = {2, 2};
  const double gamma = 0.9;
  const ValueIterationResult vi = value_iteration(w, gamma);
  std::vector<int> free_states;
  for (int s = 0; s < w.num_states(); ++s)
    if (!w.terminal(s)) free_states.push_back(s);
  std::vector<double> best(w.num_states(), -1e300);
  best[w.goal_state()] = 0.0;
  std::vector<int> pi(w.num_states(), 0);
  const long total = 1L << (2 * free_states.size());
  for (long code = 0; code < total; ++code) {
    long c = code;
    for (int s : free_states) {
      pi[s] = static_cast<int>(c & 3);
      c >>= 2;
    }
    for (int s : free_states) best[s] = std::max(best[s], policy_value(w, pi, s, gamma));
  }
  for (int s = 0; s < w.num_states(); ++s) EXPECT_NEAR(vi.values[s], best[s], 1e-9) << s;
}

TEST(Tabular, DefaultWorldOraclePolicyReachesGoal) {
  Gridworld w;
  const ValueIterationResult vi = value_iteration(w, 0.9);
  for (int s = 0; s < w.num_states(); ++s) {
    if (w.terminal(s)) continue;
    int cur = s, steps = 0;
    while (!w.terminal(cur) && steps < 25) cur = w.next_state(cur, vi.policy[cur]), ++steps;
    EXPECT_TRUE(w.terminal(cur));
    const Cell a = w.cell(s);
    EXPECT_EQ(steps, (4 - a.x) + (4 - a.y));
  }
  // Ties between down and right resolve to the earlier action.
  EXPECT_EQ(vi.policy[w.start_state()], kDown);
}

TEST(Tabular, ZeroPotentialRunsAreIdentical) {
  Gridworld w;
  ExperimentOptions opt;
  opt.episodes = 2000;
  const InvarianceReport r = run_invariance_experiment(w, std::vector<double>(25, 0.0), 3, opt);
  EXPECT_EQ(r.shaped_q.q, r.unshaped_q.q);
  EXPECT_EQ(r.shaped_policy, r.unshaped_policy);
}

TEST(Tabular, OraclePotentialConvergesToOraclePolicy) {
  Gridworld w;
  const ValueIterationResult vi = value_iteration(w, 0.9);
  const InvarianceReport r = run_invariance_experiment(w, vi.values, 5);
  EXPECT_EQ(r.shaped_policy, vi.policy);
  EXPECT_EQ(r.unshaped_policy, vi.policy);
  ASSERT_TRUE(r.shaped_first_full_agreement.has_value());
}

TEST(Tabular, WiewioraIdentity) {
  Gridworld w;
  SplitMix64 rng(7);
  std::vector<double> phi(25);
  for (double& p : phi) p = rng.uniform(-10, 10);
  const WiewioraResult r = run_wiewiora_check(w, phi, 20'000, 9);
  EXPECT_EQ(r.updates, 20'000);
  EXPECT_LT(r.max_abs_deviation, 1e-12);
}

TEST(Tabular, ReportFormats) {
  Gridworld w;
  ExperimentOptions opt;
  opt.episodes = 500;
  const InvarianceReport r = run_invariance_experiment(w, std::vector<double>(25, 1.0), 2, opt);
  std::ostringstream csv, table;
  write_report_csv(w, r, csv);
  write_report_table(w, r, table);
  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "state,oracle_action,shaped_action,unshaped_action");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 25);
  EXPECT_FALSE(table.str().empty());
}

TEST(Tabular, InvalidWorldRejected) {
  Gridworld w;
  w.goal = {7, 7};
  EXPECT_THROW(w.validate(), ConfigError);
}
