// End-to-end acceptance checks. One PASS/FAIL line per criterion; the exit
// status is nonzero if any criterion fails.
//
//   acceptance [--work DIR] [--only 1,5,9]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pbrs/gradcheck.hpp"
#include "pbrs/harness.hpp"
#include "pbrs/tabular.hpp"

#ifndef PBRS_DATA_DIR
#define PBRS_DATA_DIR "data"
#endif

using namespace pbrs;
namespace h = pbrs::harness;
namespace fs = std::filesystem;
using Timer = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Timer::time_point t0) {
  return std::chrono::duration<double>(Timer::now() - t0).count();
}

std::string num(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string list(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " ") + num(x, 3);
  return s;
}

// 1. Shaped Q-learning on the gridworld converges to the oracle policy.
Outcome policy_invariance() {
  const auto t0 = Timer::now();
  tabular::Gridworld w;
  tabular::ExperimentOptions opt;
  int runs = 0, exact = 0;
  double worst = 1.0;
  std::string misses;
  for (const char* name : tabular::kInvariancePotentials)
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const auto phi = tabular::named_potential(w, name, derive_seed(seed, 77), opt.gamma);
      const auto r = tabular::run_invariance_experiment(w, phi, seed, opt);
      ++runs;
      worst = std::min(worst, r.shaped_agreement);
      if (r.shaped_agreement == 1.0) ++exact;
      else misses += std::string(" ") + name + "/" + std::to_string(seed);
    }
  const double secs = seconds_since(t0);
  return {exact == runs && secs < 120.0,
          std::to_string(exact) + "/" + std::to_string(runs) + " runs match the oracle at every state, worst " +
              num(100.0 * worst) + "%, " + num(secs, 3) + " s" + (misses.empty() ? "" : "; misses:" + misses)};
}

// 2. Shaped learner equals the potential-initialized learner after every update.
Outcome wiewiora() {
  tabular::Gridworld w;
  double worst = 0.0;
  std::int64_t updates = 0;
  for (const char* name : {"random", "vstar"}) {
    const auto phi = tabular::named_potential(w, name, 5);
    const auto r = tabular::run_wiewiora_check(w, phi, 100'000, 11);
    worst = std::max(worst, r.max_abs_deviation);
    updates += r.updates;
  }
  return {worst < 1e-12 && updates >= 200'000,
          "max |Q_shaped - (Q_init - phi)| = " + num(worst, 3) + " over " + std::to_string(updates) +
              " updates (checked after each)"};
}

// 3. Discounted shaping rewards of every logged episode telescope.
Outcome telescoping() {
  int episodes = 0, bad = 0, truncated = 0;
  double worst_ratio = 0.0;
  std::int64_t steps = 0;
  for (const char* source : {"human", "cartoon", "game"})
    for (PotentialKind kind : {PotentialKind::PF1, PotentialKind::PF2, PotentialKind::PF3}) {
      ShapingSetup sh;
      EnvConfig env;
      sh.demo = normalize(load_demo(std::string(PBRS_DATA_DIR) + "/demos/" + source + ".csv"), env.leg_length());
      sh.potential.kind = kind;
      AgentConfig ac;
      ac.hidden = {32, 32};
      ac.clock_period = 24;
      DdpgAgent agent(ac, 3);
      SplitMix64 rng(derive_seed(static_cast<std::uint64_t>(kind), 17));
      // Random actor with noise (falls quickly), then small noise around zero
      // torque under the default limit and under a short one that truncates.
      for (int e = 0; e < 6; ++e) {
        EnvConfig ec = env;
        if (e >= 4) ec.max_steps = 60;
        ControlEnv ce(ec, ac.action_repeat, ac.features, &sh, ac.clock_period);
        GaussianNoise noise(derive_seed(rng.next(), 1), e < 2 ? 0.3 : 0.05);
        ce.reset(rng.next());
        const double phi0 = ce.potential();
        double sum = 0.0, discount = 1.0, phi_last = phi0;
        std::int64_t T = 0;
        bool fell = false;
        while (!ce.done()) {
          Action a = e < 2 ? agent.act(ce.observation(), true, noise, ce.clock()) : Action{};
          if (e >= 2)
            for (double& u : a.torque) u = noise.sample();
          const ControlStepResult r = ce.step(a);
          sum += discount * r.transition.shaping_reward;
          discount *= sh.potential.gamma;
          phi_last = r.phi_after;
          fell = r.fell;
          ++T;
        }
        const double err = std::abs(sum - (discount * phi_last - phi0));
        worst_ratio = std::max(worst_ratio, err / static_cast<double>(T));
        bad += err >= 1e-9 * static_cast<double>(T);
        truncated += !fell;
        ++episodes;
        steps += T;
      }
    }
  return {bad == 0, std::to_string(episodes - bad) + "/" + std::to_string(episodes) + " episodes (" +
                        std::to_string(steps) + " control steps, " + std::to_string(truncated) +
                        " ended by the step limit; 3 demos x 3 potentials), worst error/T " + num(worst_ratio, 3)};
}

// 4. Backpropagation agrees with central differences.
Outcome gradients() {
  const auto t0 = Timer::now();
  bool ok = true;
  std::string detail;
  for (auto [layers, width] : {std::pair{2, 8}, std::pair{3, 32}, std::pair{5, 128}}) {
    const TopologyCheck tc = gradient_check_topology(layers, width, 20, 2024);
    ok = ok && tc.result.max_rel_error < 1e-4;
    detail += tc.name + " " + num(tc.result.max_rel_error, 3) + ", ";
  }
  const double secs = seconds_since(t0);
  return {ok && secs < 60.0, "max relative error over 20 cases: " + detail + num(secs, 3) + " s"};
}

// 5. Stepping a mirrored state equals mirroring the stepped state.
Outcome mirror_equivariance() {
  EnvConfig c;
  SplitMix64 rng(2718);
  double worst = 0.0;
  int contacts = 0;
  const int pairs = 10'000;
  for (int i = 0; i < pairs; ++i) {
    SimState s = rest_state(c);
    s.pelvis_pos = {rng.uniform(-2.0, 2.0), rng.uniform(0.6, 1.05)};
    s.pelvis_rot = rng.uniform(-0.5, 0.5);
    s.pelvis_vel = {rng.uniform(-2.0, 2.0), rng.uniform(-1.0, 1.0)};
    s.pelvis_angvel = rng.uniform(-2.0, 2.0);
    for (int j = 0; j < kNumJoints; ++j) {
      const JointLimit lim = c.joint_limits[j % 3];
      s.joint_angle[j] = rng.uniform(lim.lower, lim.upper);
      s.joint_angvel[j] = rng.uniform(-3.0, 3.0);
    }
    Action a;
    for (double& u : a.torque) u = rng.uniform(-1.2, 1.2);
    for (const Vec2& p : contact_positions(s, c)) contacts += p.y() < 0.0;

    const auto [ms, ma] = mirror(s, a);
    const SimState lhs = step(ms, ma, c).state;
    const SimState rhs = mirror(step(s, a, c).state);
    auto track = [&](double x, double y) { worst = std::max(worst, std::abs(x - y)); };
    track(lhs.pelvis_pos.x(), rhs.pelvis_pos.x());
    track(lhs.pelvis_pos.y(), rhs.pelvis_pos.y());
    track(lhs.pelvis_rot, rhs.pelvis_rot);
    track(lhs.pelvis_vel.x(), rhs.pelvis_vel.x());
    track(lhs.pelvis_vel.y(), rhs.pelvis_vel.y());
    track(lhs.pelvis_angvel, rhs.pelvis_angvel);
    for (int j = 0; j < kNumJoints; ++j) {
      track(lhs.joint_angle[j], rhs.joint_angle[j]);
      track(lhs.joint_angvel[j], rhs.joint_angvel[j]);
    }
  }
  return {worst < 1e-9, std::to_string(pairs) + " random (state, action) pairs, " + std::to_string(contacts) +
                            " ground-penetrating contact points, max deviation " + num(worst, 3)};
}

// 6. Potential values at a known offset.
Outcome potential_values() {
  auto ulps = [](double a, double b) {
    if (a == b) return 0.0;
    return std::abs(a - b) / (std::nextafter(std::max(a, b), INFINITY) - std::max(a, b));
  };
  const double pf1 = part_potential(0.3, 0.4, PotentialKind::PF1, 1e-3);
  const double pf2 = part_potential(0.3, 0.4, PotentialKind::PF2, 1e-3);
  const double pf3 = part_potential(0.3, 0.4, PotentialKind::PF3, 1e-3);
  const double worst = std::max({ulps(pf1, 1.0 / 0.7), ulps(pf2, 2.0), ulps(pf3, 4.0)});
  std::ostringstream os;
  os << std::setprecision(17) << "PF1 " << pf1 << ", PF2 " << pf2 << ", PF3 " << pf3 << " (max " << worst
     << " ulp)";
  return {worst <= 1.0, os.str()};
}

h::ExperimentConfig preset_for(const std::string& name) {
  h::ExperimentConfig cfg = h::preset(name);
  cfg.demo_dir = std::string(PBRS_DATA_DIR) + "/demos";
  return cfg;
}

std::vector<double> finals(const h::RunReport& r, const h::ExperimentConfig& cfg, const std::string& arm) {
  std::vector<double> v;
  for (std::uint64_t s : cfg.seeds) v.push_back(r.find(arm, s).curve.back().eval_mean_distance);
  return v;
}

std::string failures(const h::RunReport& r) {
  std::string s;
  for (const auto& o : r.outcomes)
    if (!o.ok) s += " " + o.arm + "/" + std::to_string(o.seed) + ": " + o.error;
  return s;
}

// 7. Human-demo shaping beats the baseline at the full desk budget.
Outcome shaping_benefit(const fs::path& work) {
  const auto t0 = Timer::now();
  const auto cfg = preset_for("shaped_vs_baseline");
  const auto r = h::run(cfg, work, {0, &std::cerr});
  if (!r.ok()) return {false, "runs failed:" + failures(r)};
  const auto base = finals(r, cfg, "baseline"), shaped = finals(r, cfg, "shaped");
  const double mb = median(base), ms = median(shaped);
  return {ms > mb, "median final distance shaped " + num(ms) + " m vs baseline " + num(mb) + " m (shaped [" +
                       list(shaped) + "], baseline [" + list(base) + "]), " + num(seconds_since(t0) / 60.0, 3) +
                       " min"};
}

// 8. Shaping from a weak policy's own gait outgrows that policy.
Outcome suboptimal_recovery(const fs::path& work) {
  const auto t0 = Timer::now();
  const auto cfg = preset_for("suboptimal_demo");
  const auto r = h::run(cfg, work, {0, &std::cerr});
  if (!r.ok()) return {false, "runs failed:" + failures(r)};
  const auto source = finals(r, cfg, "source"), shaped = finals(r, cfg, "shaped");
  const double msrc = median(source), msh = median(shaped);
  const double target = msrc + 0.25 * std::abs(msrc);
  return {msh >= target && msh > msrc,
          "median final distance shaped " + num(msh) + " m vs demo source " + num(msrc) + " m (needs >= " +
              num(target) + "; shaped [" + list(shaped) + "], source [" + list(source) + "]), " +
              num(seconds_since(t0) / 60.0, 3) + " min"};
}

// 9. Fresh reruns of presets reproduce every CSV byte for byte.
Outcome determinism(const fs::path& work) {
  const fs::path a = work / "determinism_a", b = work / "determinism_b";
  fs::remove_all(a);
  fs::remove_all(b);
  std::size_t compared = 0;
  std::string diffs;
  for (const char* name : {"shaped_vs_baseline", "suboptimal_demo"}) {
    auto cfg = preset_for(name);
    cfg.seeds = {1, 2};
    cfg.budget = 4000;
    cfg.eval_every = 1000;
    const auto ra = h::run(cfg, a, {0, nullptr});
    const auto rb = h::run(cfg, b, {0, nullptr});
    if (!ra.ok() || !rb.ok()) return {false, std::string(name) + " runs failed:" + failures(ra) + failures(rb)};
  }
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
    const fs::path other = b / fs::relative(e.path(), a);
    std::ifstream fa(e.path(), std::ios::binary), fb(other, std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
    if (!fb || sa != sb) diffs += " " + fs::relative(e.path(), a).string();
    ++compared;
  }
  return {compared > 0 && diffs.empty(),
          std::to_string(compared) + " CSV files from two fresh runs of 2 presets x 2 seeds compared" +
              (diffs.empty() ? ", all identical" : "; differing:" + diffs)};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = "acceptance_runs";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else if (arg == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string t; std::getline(ss, t, ',');) only.insert(std::stoi(t));
    } else {
      std::cerr << "usage: acceptance [--work DIR] [--only 1,2,...]\n";
      return 2;
    }
  }
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"policy invariance (gridworld, 4 potentials x 10 seeds)", policy_invariance},
      {"shaped Q equals potential-initialized Q", wiewiora},
      {"telescoping of logged shaping rewards", telescoping},
      {"gradient check (2x8, 3x32, 5x128)", gradients},
      {"mirror equivariance of the simulator", mirror_equivariance},
      {"potential values at (0.3, 0.4)", potential_values},
      {"shaped vs baseline, median of 5 seeds at 300k steps", [&] { return shaping_benefit(work); }},
      {"suboptimal demo recovery, median of 5 seeds", [&] { return suboptimal_recovery(work); }},
      {"bit-identical reruns", [&] { return determinism(work); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "criterion " << id << " " << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i].first << ": "
              << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
