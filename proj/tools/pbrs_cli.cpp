#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "pbrs/gradcheck.hpp"
#include "pbrs/harness.hpp"
#include "pbrs/tabular.hpp"

#ifndef PBRS_DATA_DIR
#define PBRS_DATA_DIR "data"
#endif

using namespace pbrs;
namespace h = pbrs::harness;

namespace {

std::string default_demo_dir() {
  if (const char* d = std::getenv("PBRS_DEMO_DIR")) return d;
  return std::string(PBRS_DATA_DIR) + "/demos";
}

int cmd_run(const std::string& preset, const std::string& config_file, const std::vector<std::string>& sets,
            const std::string& seeds, std::int64_t budget, const std::string& out, int threads, bool quiet) {
  std::vector<h::KeyValue> kvs{{"demo_dir", default_demo_dir(), "default"}};
  if (!preset.empty()) kvs.push_back({"preset", preset, "--preset"});
  if (!config_file.empty()) {
    std::ifstream in(config_file);
    if (!in) throw ConfigError("cannot open config '" + config_file + "'");
    for (auto& kv : h::parse_key_values(in, config_file)) kvs.push_back(std::move(kv));
  }
  for (const std::string& s : sets)
    for (auto& kv : h::parse_key_values(s, "--set")) kvs.push_back(std::move(kv));
  if (!seeds.empty()) kvs.push_back({"seeds", seeds, "--seeds"});
  if (budget > 0) kvs.push_back({"budget", std::to_string(budget), "--budget"});

  const h::ExperimentConfig cfg = h::load_config(kvs);
  h::RunOptions opt;
  opt.threads = threads;
  opt.log = quiet ? nullptr : &std::cerr;
  const h::RunReport report = h::run(cfg, out, opt);

  for (const h::SeedOutcome& o : report.outcomes) {
    std::cout << cfg.name << '/' << o.arm << " seed " << o.seed << ": ";
    if (!o.ok) {
      std::cout << "FAILED: " << o.error << '\n';
      continue;
    }
    std::cout << (o.resumed ? "resumed" : "done");
    if (!o.curve.empty()) std::cout << ", final distance " << o.curve.back().eval_mean_distance;
    std::cout << '\n';
  }
  if (!report.ok()) {
    std::cerr << "some seeds failed; aggregate not written\n";
    return 1;
  }
  for (const auto& p : report.aggregates) std::cout << "wrote " << p.string() << '\n';
  return 0;
}

int cmd_verify(int seeds, int episodes) {
  tabular::Gridworld w;
  tabular::ExperimentOptions opt;
  if (episodes > 0) opt.episodes = episodes;
  bool ok = true;
  std::cout << "potential   seed  shaped  unshaped\n";
  for (const char* name : tabular::kInvariancePotentials) {
    for (int s = 1; s <= seeds; ++s) {
      const auto seed = static_cast<std::uint64_t>(s);
      const auto phi = tabular::named_potential(w, name, derive_seed(seed, 77), opt.gamma);
      const auto r = tabular::run_invariance_experiment(w, phi, seed, opt);
      std::cout << std::left << std::setw(10) << name << std::right << std::setw(6) << s << std::setw(7)
                << 100.0 * r.shaped_agreement << "%" << std::setw(9) << 100.0 * r.unshaped_agreement << "%\n";
      ok = ok && r.shaped_agreement == 1.0;
    }
  }
  const auto phi = tabular::named_potential(w, "random", 5);
  const auto wr = tabular::run_wiewiora_check(w, phi, 100'000, 11);
  std::cout << "shaped Q vs Q0 - phi over " << wr.updates << " updates: max deviation " << wr.max_abs_deviation
            << '\n';
  ok = ok && wr.max_abs_deviation < 1e-12;
  std::cout << (ok ? "ok" : "MISMATCH") << '\n';
  return ok ? 0 : 1;
}

int cmd_gradcheck(int cases) {
  bool ok = true;
  for (auto [layers, width] : {std::pair{2, 8}, std::pair{3, 32}, std::pair{5, 128}}) {
    const TopologyCheck tc = gradient_check_topology(layers, width, cases, 2024);
    std::cout << tc.name << ": max relative error " << tc.result.max_rel_error << " over " << tc.result.checked
              << " derivatives (" << tc.result.skipped_kinks << " skipped at ReLU kinks)\n";
    ok = ok && tc.result.max_rel_error < 1e-4;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reward shaping from demonstrations: experiment runner and checks"};
  app.require_subcommand(1);

  std::string preset, config_file, seeds, out = "runs";
  std::vector<std::string> sets;
  std::int64_t budget = 0;
  int threads = 0;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "train every arm and seed of an experiment");
  run->add_option("--preset", preset, "named experiment (" + [] {
    std::string s;
    for (const auto& n : h::preset_names()) s += (s.empty() ? "" : ", ") + n;
    return s;
  }() + ")");
  run->add_option("--config", config_file, "key=value file applied on top of the preset");
  run->add_option("--set", sets, "extra key=value setting (repeatable)");
  run->add_option("--seeds", seeds, "comma-separated seeds");
  run->add_option("--budget", budget, "control steps per run");
  run->add_option("--out", out, "output directory")->capture_default_str();
  run->add_option("--threads", threads, "concurrent runs (default: RUNNER_THREADS or core count)");
  run->add_flag("--quiet", quiet, "no progress lines");

  std::string agg_dir;
  auto* agg = app.add_subcommand("aggregate", "recompute aggregate.csv from per-seed curves");
  agg->add_option("--dir", agg_dir, "arm or preset directory")->required();

  std::string checkpoint, demo_out;
  int episodes = 3;
  auto* demo = app.add_subcommand("make-demo", "turn a policy checkpoint into a demo track");
  demo->add_option("--checkpoint", checkpoint, "seed_<n>.actor.mlp")->required();
  demo->add_option("--out", demo_out, "demo CSV to write")->required();
  demo->add_option("--episodes", episodes, "noise-free episodes to pick from")->capture_default_str();

  int verify_seeds = 10, verify_episodes = 0;
  auto* verify = app.add_subcommand("verify-pbrs", "gridworld policy invariance check");
  verify->add_option("--seeds", verify_seeds)->capture_default_str();
  verify->add_option("--episodes", verify_episodes, "Q-learning episodes per run");

  int cases = 20;
  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of the network gradients");
  grad->add_option("--cases", cases)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run) return cmd_run(preset, config_file, sets, seeds, budget, out, threads, quiet);
    if (*agg) {
      for (const auto& d : h::aggregate_dir(agg_dir)) std::cout << "wrote " << (d / "aggregate.csv").string() << '\n';
      return 0;
    }
    if (*demo) {
      const DemoTrack t = h::make_suboptimal_demo(checkpoint, nullptr, episodes);
      save_demo(t, demo_out);
      std::cout << "wrote " << t.frames.size() << " frames to " << demo_out << '\n';
      return 0;
    }
    if (*verify) return cmd_verify(verify_seeds, verify_episodes);
    if (*grad) return cmd_gradcheck(cases);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
