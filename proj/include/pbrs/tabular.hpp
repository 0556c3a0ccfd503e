#pragma once

// Tabular ground truth for potential-based shaping: a deterministic gridworld,
// literal one-cell Q-learning updates (with and without a shaping term), and
// value iteration as the exact policy oracle.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pbrs/error.hpp"
#include "pbrs/rng.hpp"

namespace pbrs::tabular {

inline constexpr int kNumActions = 4;

/// Fixed order; greedy ties are broken toward the earliest action.
enum GridAction : int { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };

inline const char* action_name(int a) {
  static constexpr const char* kNames[kNumActions] = {"up", "down", "left", "right"};
  return (a >= 0 && a < kNumActions) ? kNames[a] : "-";
}

struct Cell {
  int x = 0;
  int y = 0;  // row, 0 at the top; "up" decreases y
  bool operator==(const Cell&) const = default;
};

/// Deterministic gridworld. Moves into the border leave the agent in place.
/// Every move costs `step_reward`; the goal is terminal with value 0, and its
/// bonus is credited on the arriving move one tick late, i.e. as
/// `step_reward + gamma * goal_reward`.
struct Gridworld {
  int width = 5;
  int height = 5;
  Cell start{0, 0};
  Cell goal{4, 4};
  double step_reward = -1.0;
  double goal_reward = 10.0;

  int num_states() const { return width * height; }
  int index(Cell c) const { return c.y * width + c.x; }
  Cell cell(int s) const { return {s % width, s / width}; }
  int start_state() const { return index(start); }
  int goal_state() const { return index(goal); }
  bool terminal(int s) const { return s == goal_state(); }

  void validate() const {
    if (width < 1 || height < 1) throw ConfigError("Gridworld: dimensions must be >= 1");
    auto inside = [&](Cell c) { return c.x >= 0 && c.x < width && c.y >= 0 && c.y < height; };
    if (!inside(start) || !inside(goal)) throw ConfigError("Gridworld: start/goal outside the grid");
    if (num_states() < 2) throw ConfigError("Gridworld: needs at least two cells");
    if (!std::isfinite(step_reward) || !std::isfinite(goal_reward))
      throw ConfigError("Gridworld: rewards must be finite");
  }

  int next_state(int s, int a) const {
    Cell c = cell(s);
    switch (a) {
      case kUp:
        c.y = std::max(0, c.y - 1);
        break;
      case kDown:
        c.y = std::min(height - 1, c.y + 1);
        break;
      case kLeft:
        c.x = std::max(0, c.x - 1);
        break;
      case kRight:
        c.x = std::min(width - 1, c.x + 1);
        break;
    }
    return index(c);
  }

  double reward(int next, double gamma) const {
    return terminal(next) ? step_reward + gamma * goal_reward : step_reward;
  }
};

struct QTable {
  std::vector<std::array<double, kNumActions>> q;

  static QTable zeros(int states) {
    QTable t;
    t.q.assign(states, {0.0, 0.0, 0.0, 0.0});
    return t;
  }

  /// Q0(s, a) = phi(s) for every action.
  static QTable from_potential(const std::vector<double>& phi) {
    QTable t;
    t.q.resize(phi.size());
    for (std::size_t s = 0; s < phi.size(); ++s) t.q[s].fill(phi[s]);
    return t;
  }

  double max(int s) const { return *std::max_element(q[s].begin(), q[s].end()); }
};

/// Q(s,a) <- Q(s,a) + alpha * [r + gamma * max_a' Q(s',a') - Q(s,a)].
inline void q_update_unshaped(QTable& t, int s, int a, double r, int s_next, double alpha,
                              double gamma) {
  double& cell = t.q[s][a];
  cell = cell + alpha * (r + gamma * t.max(s_next) - cell);
}

/// Q(s,a) <- Q(s,a) + alpha * [r + F + gamma * max_a' Q(s',a') - Q(s,a)].
inline void q_update(QTable& t, int s, int a, double r, int s_next, double alpha, double gamma,
                     double shaping) {
  double& cell = t.q[s][a];
  cell = cell + alpha * (r + shaping + gamma * t.max(s_next) - cell);
}

/// Index of the best action; values within `tie_tolerance` of the maximum
/// count as tied and the earliest such action wins.
inline int greedy_action(const std::array<double, kNumActions>& row, double tie_tolerance) {
  const double best = *std::max_element(row.begin(), row.end());
  for (int a = 0; a < kNumActions; ++a)
    if (row[a] >= best - tie_tolerance) return a;
  return 0;
}

inline constexpr double kDefaultTieTolerance = 1e-6;

/// Greedy action per state; terminal states get -1.
inline std::vector<int> greedy_policy(const Gridworld& w, const QTable& t,
                                      double tie_tolerance = kDefaultTieTolerance) {
  std::vector<int> pi(w.num_states(), -1);
  for (int s = 0; s < w.num_states(); ++s)
    if (!w.terminal(s)) pi[s] = greedy_action(t.q[s], tie_tolerance);
  return pi;
}

struct ValueIterationResult {
  std::vector<double> values;  // V*, terminal states 0
  QTable q;                    // Q* from V*
  std::vector<int> policy;
  int sweeps = 0;
};

inline ValueIterationResult value_iteration(const Gridworld& w, double gamma, double tol = 1e-10,
                                            double tie_tolerance = kDefaultTieTolerance) {
  w.validate();
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("value_iteration: gamma must be in (0, 1)");
  const int n = w.num_states();
  ValueIterationResult r;
  r.values.assign(n, 0.0);
  for (;;) {
    double delta = 0.0;
    for (int s = 0; s < n; ++s) {
      if (w.terminal(s)) continue;
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < kNumActions; ++a) {
        const int s2 = w.next_state(s, a);
        best = std::max(best, w.reward(s2, gamma) + gamma * r.values[s2]);
      }
      delta = std::max(delta, std::abs(best - r.values[s]));
      r.values[s] = best;
    }
    ++r.sweeps;
    if (delta < tol) break;
  }
  r.q = QTable::zeros(n);
  for (int s = 0; s < n; ++s) {
    if (w.terminal(s)) continue;
    for (int a = 0; a < kNumActions; ++a) {
      const int s2 = w.next_state(s, a);
      r.q.q[s][a] = w.reward(s2, gamma) + gamma * r.values[s2];
    }
  }
  r.policy = greedy_policy(w, r.q, tie_tolerance);
  return r;
}

/// Shaping reward on the grid. Terminal states have potential zero, which is
/// what keeps episodic shaping policy-invariant.
inline double grid_shaping(const Gridworld& w, const std::vector<double>& phi, int s, int s_next,
                           double gamma) {
  const double next = w.terminal(s_next) ? 0.0 : phi[s_next];
  return gamma * next - phi[s];
}

/// Copy of `phi` with terminal entries set to zero.
inline std::vector<double> with_zero_terminal(const Gridworld& w, std::vector<double> phi) {
  for (int s = 0; s < w.num_states(); ++s)
    if (w.terminal(s)) phi[s] = 0.0;
  return phi;
}

/// The potentials used by the invariance check: "zero", "random" (uniform in
/// [-10, 10], drawn from `seed`), "vstar" and "neg_vstar".
inline std::vector<double> named_potential(const Gridworld& w, const std::string& name, std::uint64_t seed,
                                           double gamma = 0.9) {
  const int n = w.num_states();
  if (name == "zero") return std::vector<double>(n, 0.0);
  if (name == "random") {
    SplitMix64 rng(seed);
    std::vector<double> phi(n);
    for (double& v : phi) v = rng.uniform(-10.0, 10.0);
    return with_zero_terminal(w, phi);
  }
  if (name == "vstar" || name == "neg_vstar") {
    std::vector<double> v = value_iteration(w, gamma).values;
    if (name == "neg_vstar")
      for (double& x : v) x = -x;
    return v;
  }
  throw ConfigError("unknown potential '" + name + "' (expected zero, random, vstar or neg_vstar)");
}

inline const std::array<const char*, 4> kInvariancePotentials = {"zero", "random", "vstar", "neg_vstar"};

struct ExperimentOptions {
  double alpha = 0.08;
  double gamma = 0.9;
  int episodes = 50'000;
  double epsilon_start = 1.0;
  double epsilon_final = 0.01;
  // Fraction of episodes over which epsilon decays linearly.
  double epsilon_decay_fraction = 0.5;
  int max_episode_steps = 100;
  // Start each episode in a uniformly drawn non-terminal cell.
  bool random_starts = true;
  double tie_tolerance = kDefaultTieTolerance;
};

/// Epsilon-greedy Q-learner; `phi` empty means unshaped.
class QLearner {
 public:
  QLearner(const Gridworld& w, std::vector<double> phi, QTable init, std::uint64_t seed,
           const ExperimentOptions& opt)
      : world_(w), phi_(std::move(phi)), q_(std::move(init)), rng_(seed), opt_(opt) {}

  const QTable& q() const { return q_; }
  std::int64_t updates() const { return updates_; }

  void run_episode(double epsilon) {
    int s = opt_.random_starts ? random_nonterminal() : world_.start_state();
    for (int k = 0; k < opt_.max_episode_steps && !world_.terminal(s); ++k) {
      int a = 0;
      const double roll = rng_.uniform01();
      const auto explore_action = static_cast<int>(rng_.below(kNumActions));
      a = roll < epsilon ? explore_action : greedy_action(q_.q[s], 0.0);
      const int s2 = world_.next_state(s, a);
      const double r = world_.reward(s2, opt_.gamma);
      if (phi_.empty()) {
        q_update_unshaped(q_, s, a, r, s2, opt_.alpha, opt_.gamma);
      } else {
        q_update(q_, s, a, r, s2, opt_.alpha, opt_.gamma, grid_shaping(world_, phi_, s, s2, opt_.gamma));
      }
      ++updates_;
      s = s2;
    }
  }

 private:
  int random_nonterminal() {
    for (;;) {
      const auto s = static_cast<int>(rng_.below(static_cast<std::uint64_t>(world_.num_states())));
      if (!world_.terminal(s)) return s;
    }
  }

  const Gridworld& world_;
  std::vector<double> phi_;
  QTable q_;
  SplitMix64 rng_;
  ExperimentOptions opt_;
  std::int64_t updates_ = 0;
};

inline double epsilon_at(const ExperimentOptions& opt, int episode) {
  const double span = std::max(1.0, opt.epsilon_decay_fraction * opt.episodes);
  const double f = std::min(1.0, episode / span);
  return opt.epsilon_start + (opt.epsilon_final - opt.epsilon_start) * f;
}

inline double agreement(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
  return static_cast<double>(same) / static_cast<double>(a.size());
}

struct InvarianceReport {
  std::vector<int> oracle_policy;
  std::vector<int> shaped_policy;
  std::vector<int> unshaped_policy;
  std::vector<bool> shaped_agrees;
  std::vector<bool> unshaped_agrees;
  double shaped_agreement = 0.0;
  double unshaped_agreement = 0.0;
  // First episode (1-based) after which the greedy policy matched the oracle
  // everywhere; nullopt if it never did.
  std::optional<int> shaped_first_full_agreement;
  std::optional<int> unshaped_first_full_agreement;
  QTable shaped_q;
  QTable unshaped_q;
};

/// Trains a shaped (F = gamma * phi(s') - phi(s)) and an unshaped learner
/// with identical seeds and compares both greedy policies with the oracle.
inline InvarianceReport run_invariance_experiment(const Gridworld& w, const std::vector<double>& phi,
                                                  std::uint64_t seed,
                                                  const ExperimentOptions& opt = {}) {
  w.validate();
  if (static_cast<int>(phi.size()) != w.num_states())
    throw ShapeError("run_invariance_experiment: potential has wrong length");
  const ValueIterationResult oracle = value_iteration(w, opt.gamma, 1e-10, opt.tie_tolerance);
  const std::vector<double> potential = with_zero_terminal(w, phi);

  QLearner shaped(w, potential, QTable::zeros(w.num_states()), seed, opt);
  QLearner unshaped(w, {}, QTable::zeros(w.num_states()), seed, opt);

  InvarianceReport rep;
  rep.oracle_policy = oracle.policy;
  for (int e = 0; e < opt.episodes; ++e) {
    const double eps = epsilon_at(opt, e);
    shaped.run_episode(eps);
    unshaped.run_episode(eps);
    if (!rep.shaped_first_full_agreement &&
        greedy_policy(w, shaped.q(), opt.tie_tolerance) == oracle.policy)
      rep.shaped_first_full_agreement = e + 1;
    if (!rep.unshaped_first_full_agreement &&
        greedy_policy(w, unshaped.q(), opt.tie_tolerance) == oracle.policy)
      rep.unshaped_first_full_agreement = e + 1;
  }
  rep.shaped_q = shaped.q();
  rep.unshaped_q = unshaped.q();
  rep.shaped_policy = greedy_policy(w, rep.shaped_q, opt.tie_tolerance);
  rep.unshaped_policy = greedy_policy(w, rep.unshaped_q, opt.tie_tolerance);
  for (int s = 0; s < w.num_states(); ++s) {
    rep.shaped_agrees.push_back(rep.shaped_policy[s] == rep.oracle_policy[s]);
    rep.unshaped_agrees.push_back(rep.unshaped_policy[s] == rep.oracle_policy[s]);
  }
  rep.shaped_agreement = agreement(rep.shaped_policy, rep.oracle_policy);
  rep.unshaped_agreement = agreement(rep.unshaped_policy, rep.oracle_policy);
  return rep;
}

struct WiewioraResult {
  std::int64_t updates = 0;
  double max_abs_deviation = 0.0;  // max |Q_shaped - (Q_init - phi(s))| over all checks
};

/// Drives a shaped zero-initialized learner and an unshaped learner
/// initialized with Q0(s, a) = phi(s) through one shared, seeded stream of
/// uniformly random experience, checking the full tables after every update.
inline WiewioraResult run_wiewiora_check(const Gridworld& w, const std::vector<double>& phi,
                                         std::int64_t updates, std::uint64_t seed,
                                         double alpha = 0.08, double gamma = 0.9) {
  w.validate();
  if (static_cast<int>(phi.size()) != w.num_states())
    throw ShapeError("run_wiewiora_check: potential has wrong length");
  const std::vector<double> potential = with_zero_terminal(w, phi);
  QTable shaped = QTable::zeros(w.num_states());
  QTable init = QTable::from_potential(potential);
  SplitMix64 rng(seed);
  WiewioraResult res;
  int s = w.start_state();
  while (res.updates < updates) {
    if (w.terminal(s)) s = static_cast<int>(rng.below(static_cast<std::uint64_t>(w.num_states())));
    if (w.terminal(s)) continue;
    const auto a = static_cast<int>(rng.below(kNumActions));
    const int s2 = w.next_state(s, a);
    const double r = w.reward(s2, gamma);
    q_update(shaped, s, a, r, s2, alpha, gamma, grid_shaping(w, potential, s, s2, gamma));
    q_update_unshaped(init, s, a, r, s2, alpha, gamma);
    ++res.updates;
    for (int k = 0; k < w.num_states(); ++k)
      for (int b = 0; b < kNumActions; ++b)
        res.max_abs_deviation = std::max(
            res.max_abs_deviation, std::abs(shaped.q[k][b] - (init.q[k][b] - potential[k])));
    s = s2;
  }
  return res;
}

inline void write_report_table(const Gridworld& w, const InvarianceReport& r, std::ostream& os) {
  os << "state  cell    oracle  shaped  unshaped\n";
  for (int s = 0; s < w.num_states(); ++s) {
    const Cell c = w.cell(s);
    os << std::setw(5) << s << "  (" << c.x << "," << c.y << ")   " << std::setw(6)
       << action_name(r.oracle_policy[s]) << "  " << std::setw(6) << action_name(r.shaped_policy[s])
       << (r.shaped_agrees[s] ? " " : "*") << " " << std::setw(6)
       << action_name(r.unshaped_policy[s]) << (r.unshaped_agrees[s] ? "" : "*") << '\n';
  }
  os << "shaped agreement:   " << 100.0 * r.shaped_agreement << "%\n";
  os << "unshaped agreement: " << 100.0 * r.unshaped_agreement << "%\n";
}

inline void write_report_csv(const Gridworld& w, const InvarianceReport& r, std::ostream& os) {
  os << "state,oracle_action,shaped_action,unshaped_action\n";
  for (int s = 0; s < w.num_states(); ++s)
    os << s << ',' << action_name(r.oracle_policy[s]) << ',' << action_name(r.shaped_policy[s])
       << ',' << action_name(r.unshaped_policy[s]) << '\n';
}

}  // namespace pbrs::tabular
