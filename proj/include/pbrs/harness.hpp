#pragma once

// Experiment runner: key=value configs, named presets, multi-seed runs with
// per-seed curve CSVs, aggregation across seeds, and policy-derived demos.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <system_error>
#include <thread>
#include <vector>

#include "pbrs/ddpg_agent.hpp"

namespace pbrs::harness {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- text utils

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

/// Shortest decimal text that reads back to the same double.
inline std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline double to_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v))
    throw ConfigError(what + ": '" + s + "' is not a finite number");
  return v;
}

inline std::int64_t to_int(const std::string& s, const std::string& what) {
  std::int64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw ConfigError(what + ": '" + s + "' is not an integer");
  return v;
}

inline bool to_bool(const std::string& s, const std::string& what) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError(what + ": '" + s + "' is not a boolean");
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes through a temporary file so a crash never leaves a truncated output.
inline void write_atomically(const fs::path& p, const std::string& content) {
  fs::path tmp = p;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    os << content;
    if (!os) throw std::runtime_error("failed writing '" + tmp.string() + "'");
  }
  fs::rename(tmp, p);
}

}  // namespace detail

struct KeyValue {
  std::string key;
  std::string value;
  std::string where;  // "file:line" for error messages
};

/// `key = value` lines; '#' starts a comment.
inline std::vector<KeyValue> parse_key_values(std::istream& in, const std::string& source) {
  std::vector<KeyValue> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    const std::string where = source + ":" + std::to_string(n);
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value, got '" + t + "'");
    KeyValue kv{detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)), where};
    if (kv.key.empty()) throw ConfigError(where + ": empty key");
    out.push_back(std::move(kv));
  }
  return out;
}

inline std::vector<KeyValue> parse_key_values(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  return parse_key_values(in, source);
}

// -------------------------------------------------------------- arm settings

/// Everything that distinguishes one arm of an experiment.
struct ArmSettings {
  std::string name = "main";
  EnvConfig env;
  AgentConfig agent;  // shaping is attached per run, from `demo`
  // none | human | cartoon | game | arm:<name> | path to a demo CSV
  std::string demo = "none";
  PotentialConfig potential;
  // Control steps per clock turn; nullopt means "the demo's frame count".
  std::optional<std::int64_t> clock_period = 0;
  double budget_fraction = 1.0;
};

namespace detail {

struct Field {
  const char* key;
  std::function<void(ArmSettings&, const std::string&)> set;
  std::function<std::string(const ArmSettings&)> get;
};

inline std::vector<int> parse_hidden(const std::string& v) {
  std::vector<int> out;
  if (const auto x = v.find('x'); x != std::string::npos) {
    const auto layers = to_int(v.substr(0, x), "hidden");
    const auto width = to_int(v.substr(x + 1), "hidden");
    if (layers < 1 || width < 1 || layers > 64) throw ConfigError("hidden: '" + v + "' is not LxN");
    out.assign(static_cast<std::size_t>(layers), static_cast<int>(width));
  } else {
    for (const std::string& w : split(v, ',')) out.push_back(static_cast<int>(to_int(w, "hidden")));
  }
  return out;
}

inline std::string format_hidden(const std::vector<int>& h) {
  const bool uniform = std::all_of(h.begin(), h.end(), [&](int w) { return w == h.front(); });
  if (uniform) return std::to_string(h.size()) + "x" + std::to_string(h.front());
  std::string s;
  for (int w : h) s += (s.empty() ? "" : ",") + std::to_string(w);
  return s;
}

#define PBRS_REAL(KEY, EXPR)                                                    \
  Field {                                                                       \
    KEY, [](ArmSettings& a, const std::string& v) { EXPR = to_double(v, KEY); }, \
        [](const ArmSettings& a) { return fmt(EXPR); }                          \
  }
#define PBRS_INT(KEY, EXPR, T)                                                                \
  Field {                                                                                     \
    KEY, [](ArmSettings& a, const std::string& v) { EXPR = static_cast<T>(to_int(v, KEY)); }, \
        [](const ArmSettings& a) { return std::to_string(EXPR); }                             \
  }

/// Schema of per-arm keys, in canonical order.
inline const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      {"hidden", [](ArmSettings& a, const std::string& v) { a.agent.hidden = parse_hidden(v); },
       [](const ArmSettings& a) { return format_hidden(a.agent.hidden); }},
      PBRS_REAL("actor_lr", a.agent.hyper.actor_lr),
      PBRS_REAL("critic_lr", a.agent.hyper.critic_lr),
      {"gamma",
       [](ArmSettings& a, const std::string& v) {
         a.agent.hyper.gamma = to_double(v, "gamma");
         a.potential.gamma = a.agent.hyper.gamma;
       },
       [](const ArmSettings& a) { return fmt(a.agent.hyper.gamma); }},
      PBRS_REAL("tau", a.agent.hyper.tau),
      PBRS_INT("batch_size", a.agent.hyper.batch_size, int),
      PBRS_REAL("noise_sigma", a.agent.hyper.noise_sigma),
      PBRS_REAL("noise_sigma_final", a.agent.hyper.noise_sigma_final),
      PBRS_INT("noise_decay_steps", a.agent.hyper.noise_decay_steps, std::int64_t),
      PBRS_INT("warmup_steps", a.agent.hyper.warmup_steps, std::int64_t),
      PBRS_INT("update_every", a.agent.hyper.update_every, int),
      PBRS_INT("action_repeat", a.agent.action_repeat, int),
      {"mirror_augment",
       [](ArmSettings& a, const std::string& v) { a.agent.mirror_augment = to_bool(v, "mirror_augment"); },
       [](const ArmSettings& a) { return std::string(a.agent.mirror_augment ? "true" : "false"); }},
      {"features",
       [](ArmSettings& a, const std::string& v) {
         if (v == "full") a.agent.features = FeatureMode::kFull;
         else if (v == "base") a.agent.features = FeatureMode::kBaseOnly;
         else throw ConfigError("features: expected full or base, got '" + v + "'");
       },
       [](const ArmSettings& a) {
         return std::string(a.agent.features == FeatureMode::kFull ? "full" : "base");
       }},
      {"replay_capacity",
       [](ArmSettings& a, const std::string& v) {
         const auto n = to_int(v, "replay_capacity");
         if (n < 1) throw ConfigError("replay_capacity must be >= 1");
         a.agent.replay_capacity = static_cast<std::size_t>(n);
       },
       [](const ArmSettings& a) { return std::to_string(a.agent.replay_capacity); }},
      {"clock_period",
       [](ArmSettings& a, const std::string& v) {
         if (v == "demo") a.clock_period.reset();
         else a.clock_period = to_int(v, "clock_period");
       },
       [](const ArmSettings& a) {
         return a.clock_period ? std::to_string(*a.clock_period) : std::string("demo");
       }},
      {"demo",
       [](ArmSettings& a, const std::string& v) {
         if (v.empty()) throw ConfigError("demo: empty value");
         a.demo = v;
       },
       [](const ArmSettings& a) { return a.demo; }},
      {"potential",
       [](ArmSettings& a, const std::string& v) { a.potential.kind = parse_potential_kind(v); },
       [](const ArmSettings& a) { return std::string(to_string(a.potential.kind)); }},
      PBRS_REAL("epsilon", a.potential.epsilon),
      {"part_weight",
       [](ArmSettings& a, const std::string& v) {
         a.potential.part_weights.fill(to_double(v, "part_weight"));
       },
       [](const ArmSettings& a) {
         const auto& w = a.potential.part_weights;
         if (std::all_of(w.begin(), w.end(), [&](double x) { return x == w[0]; })) return fmt(w[0]);
         std::string s;
         for (double x : w) s += (s.empty() ? "" : ",") + fmt(x);
         return s;
       }},
      PBRS_REAL("pelvis_weight", a.potential.pelvis_weight),
      PBRS_REAL("pelvis_target_height", a.potential.pelvis_target_height),
      PBRS_REAL("budget_fraction", a.budget_fraction),
      PBRS_REAL("env.dt", a.env.dt),
      PBRS_INT("env.substeps", a.env.substeps, int),
      PBRS_INT("env.max_steps", a.env.max_steps, int),
      PBRS_REAL("env.effort_cost_coeff", a.env.effort_cost_coeff),
      PBRS_REAL("env.reset_noise", a.env.reset_noise),
      PBRS_REAL("env.fall_height_threshold", a.env.fall_height_threshold),
      PBRS_REAL("env.fall_tilt_threshold", a.env.fall_tilt_threshold),
      PBRS_REAL("env.friction_coeff", a.env.friction_coeff),
      PBRS_REAL("env.joint_damping", a.env.joint_damping),
      PBRS_REAL("env.ground_stiffness", a.env.ground_stiffness),
      PBRS_REAL("env.ground_damping", a.env.ground_damping),
  };
  return f;
}

#undef PBRS_REAL
#undef PBRS_INT

inline const Field* find_field(const std::string& key) {
  for (const Field& f : fields())
    if (key == f.key) return &f;
  return nullptr;
}

}  // namespace detail

inline bool is_arm_key(const std::string& key) { return detail::find_field(key) != nullptr; }

inline void set_arm_key(ArmSettings& a, const std::string& key, const std::string& value) {
  const detail::Field* f = detail::find_field(key);
  if (!f) throw ConfigError("unknown key '" + key + "'");
  f->set(a, value);
}

/// One `key=value` line per schema field, in schema order.
inline std::string canonical_text(const ArmSettings& a) {
  std::string s;
  for (const detail::Field& f : detail::fields()) s += std::string(f.key) + "=" + f.get(a) + "\n";
  return s;
}

inline std::optional<std::string> source_arm(const ArmSettings& a) {
  if (a.demo.rfind("arm:", 0) == 0) return a.demo.substr(4);
  return std::nullopt;
}

inline void validate_arm(const ArmSettings& a) {
  a.env.validate();
  a.agent.validate();
  a.potential.validate();
  if (a.clock_period && *a.clock_period < 0) throw ConfigError(a.name + ": clock_period must be >= 0");
  if (!a.clock_period && a.demo == "none")
    throw ConfigError(a.name + ": clock_period=demo needs a demo");
  if (!(a.budget_fraction > 0.0 && a.budget_fraction <= 1.0))
    throw ConfigError(a.name + ": budget_fraction must be in (0, 1]");
  if (a.potential.gamma != a.agent.hyper.gamma)
    throw ConfigError(a.name + ": potential gamma must equal the agent gamma");
}

// ---------------------------------------------------------- experiment config

struct ExperimentConfig {
  std::string preset;           // empty for hand-written configs
  std::string name = "custom";  // output subdirectory; the preset name by default
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::int64_t budget = 300'000;
  std::int64_t eval_every = 10'000;
  int eval_episodes = 3;
  std::string demo_dir = "data/demos";
  std::vector<ArmSettings> arms;

  const ArmSettings& arm(const std::string& name) const {
    for (const ArmSettings& a : arms)
      if (a.name == name) return a;
    throw ConfigError("no arm named '" + name + "'");
  }

  std::int64_t arm_budget(const ArmSettings& a) const {
    return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(a.budget_fraction *
                                                                             static_cast<double>(budget))));
  }

  void validate() const {
    if (seeds.empty()) throw ConfigError("at least one seed is required");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
      throw ConfigError("seeds must be distinct");
    if (budget <= 0) throw ConfigError("budget must be > 0");
    if (eval_every <= 0) throw ConfigError("eval_every must be > 0");
    if (eval_episodes <= 0) throw ConfigError("eval_episodes must be > 0");
    if (arms.empty()) throw ConfigError("at least one arm is required");
    if (name.empty() || name.find_first_of("/\\ ") != std::string::npos || name == "." || name == "..")
      throw ConfigError("experiment name '" + name + "' must be a plain directory name");
    std::set<std::string> names;
    for (const ArmSettings& a : arms) {
      if (a.name.empty() || a.name.find_first_of("/\\. ") != std::string::npos)
        throw ConfigError("arm name '" + a.name + "' must be non-empty without '/', '.', or spaces");
      if (!names.insert(a.name).second) throw ConfigError("duplicate arm '" + a.name + "'");
      validate_arm(a);
    }
    for (const ArmSettings& a : arms)
      if (auto src = source_arm(a)) {
        if (!names.count(*src)) throw ConfigError(a.name + ": demo refers to unknown arm '" + *src + "'");
        if (source_arm(arm(*src))) throw ConfigError(a.name + ": demo source arm must not itself use an arm demo");
        if (*src == a.name) throw ConfigError(a.name + ": an arm cannot be its own demo source");
      }
  }
};

inline std::vector<std::uint64_t> parse_seeds(const std::string& v) {
  std::vector<std::uint64_t> out;
  for (const std::string& s : detail::split(v, ',')) {
    const auto n = detail::to_int(s, "seeds");
    if (n < 0) throw ConfigError("seeds must be >= 0");
    out.push_back(static_cast<std::uint64_t>(n));
  }
  return out;
}

/// Applies key=value settings. Global keys and bare arm keys (defaults for
/// every arm) are applied first, in order; `arm.<name>.<key>` overrides after.
inline void apply_settings(ExperimentConfig& cfg, const std::vector<KeyValue>& kvs) {
  std::vector<const KeyValue*> overrides;
  std::vector<std::pair<const KeyValue*, std::string>> defaults;
  for (const KeyValue& kv : kvs) {
    const std::string& k = kv.key;
    auto fail = [&](const std::string& msg) { throw ConfigError(kv.where + ": " + msg); };
    try {
      if (k == "preset") {
        // Resolved by load_config before the settings are applied.
        if (kv.value != cfg.preset) fail("preset must be the first setting, named once");
      } else if (k == "name") {
        cfg.name = kv.value;
      } else if (k == "seeds") {
        cfg.seeds = parse_seeds(kv.value);
      } else if (k == "budget") {
        cfg.budget = detail::to_int(kv.value, k);
      } else if (k == "eval_every") {
        cfg.eval_every = detail::to_int(kv.value, k);
      } else if (k == "eval_episodes") {
        cfg.eval_episodes = static_cast<int>(detail::to_int(kv.value, k));
      } else if (k == "demo_dir") {
        cfg.demo_dir = kv.value;
      } else if (k == "arms") {
        std::vector<ArmSettings> arms;
        for (const std::string& name : detail::split(kv.value, ',')) {
          ArmSettings a = cfg.arms.empty() ? ArmSettings{} : cfg.arms.front();
          a.name = name;
          arms.push_back(a);
        }
        cfg.arms = std::move(arms);
      } else if (k.rfind("arm.", 0) == 0) {
        overrides.push_back(&kv);
      } else if (is_arm_key(k)) {
        if (cfg.arms.empty()) cfg.arms.push_back(ArmSettings{});
        for (ArmSettings& a : cfg.arms) set_arm_key(a, k, kv.value);
      } else {
        fail("unknown key '" + k + "'");
      }
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      if (msg.rfind(kv.where, 0) == 0) throw;
      fail(msg);
    }
  }
  for (const KeyValue* kv : overrides) {
    const std::string rest = kv->key.substr(4);
    const auto dot = rest.find('.');
    if (dot == std::string::npos) throw ConfigError(kv->where + ": expected arm.<name>.<key>");
    const std::string name = rest.substr(0, dot), key = rest.substr(dot + 1);
    auto it = std::find_if(cfg.arms.begin(), cfg.arms.end(),
                           [&](const ArmSettings& a) { return a.name == name; });
    if (it == cfg.arms.end()) throw ConfigError(kv->where + ": no arm named '" + name + "'");
    try {
      set_arm_key(*it, key, kv->value);
    } catch (const ConfigError& e) {
      throw ConfigError(kv->where + ": " + e.what());
    }
  }
}

// ------------------------------------------------------------------- presets

// Desk-scale defaults shared by every preset: a 2x64 network (a 5x128 run of
// 300k steps costs hours on one core) and a 24-step gait clock, the length of
// the bundled human cycle.
inline constexpr const char* kDeskDefaults = R"(
hidden = 2x64
clock_period = 24
budget = 300000
eval_every = 10000
eval_episodes = 3
seeds = 1,2,3,4,5
)";

inline const std::map<std::string, std::string>& preset_texts() {
  static const std::map<std::string, std::string> p = {
      {"baseline_ablations", R"(
arms = full, no_mirror, no_repeat, base_features, topo_1x32, topo_3x64, topo_5x128
arm.no_mirror.mirror_augment = false
arm.no_repeat.action_repeat = 1
arm.base_features.features = base
arm.topo_1x32.hidden = 1x32
arm.topo_3x64.hidden = 3x64
arm.topo_5x128.hidden = 5x128
)"},
      {"pf_compare", R"(
arms = pf1, pf2, pf3
demo = human
arm.pf1.potential = PF1
arm.pf2.potential = PF2
arm.pf3.potential = PF3
)"},
      {"source_compare", R"(
arms = human, cartoon, game
potential = PF3
arm.human.demo = human
arm.cartoon.demo = cartoon
arm.game.demo = game
)"},
      {"shaped_vs_baseline", R"(
arms = baseline, shaped
arm.shaped.demo = human
arm.shaped.potential = PF3
)"},
      {"suboptimal_demo", R"(
arms = source, shaped
arm.source.budget_fraction = 0.25
arm.shaped.demo = arm:source
arm.shaped.potential = PF3
arm.shaped.clock_period = demo
)"},
  };
  return p;
}

// Potential settings for arms that turn shaping on. Small weights and a
// capped denominator: large, spiky potentials taught the agent to stand still.
inline constexpr const char* kShapingDefaults = R"(
part_weight = 0.001
epsilon = 0.04
pelvis_weight = 0.004
)";

inline std::vector<std::string> preset_names() {
  std::vector<std::string> n;
  for (const auto& [k, v] : preset_texts()) n.push_back(k);
  return n;
}

inline ExperimentConfig preset(const std::string& name) {
  const auto& texts = preset_texts();
  const auto it = texts.find(name);
  if (it == texts.end()) {
    std::string list;
    for (const std::string& n : preset_names()) list += (list.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + name + "'; available presets: " + list);
  }
  ExperimentConfig cfg;
  cfg.preset = name;
  cfg.name = name;
  apply_settings(cfg, parse_key_values(std::string(kDeskDefaults) + kShapingDefaults, "preset:" + name));
  apply_settings(cfg, parse_key_values(it->second, "preset:" + name));
  return cfg;
}

/// Preset (if the settings name one) plus the settings on top.
inline ExperimentConfig load_config(const std::vector<KeyValue>& kvs) {
  std::optional<std::string> name;
  for (const KeyValue& kv : kvs)
    if (kv.key == "preset") name = kv.value;
  ExperimentConfig cfg = name ? preset(*name) : ExperimentConfig{};
  apply_settings(cfg, kvs);
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------- curve files

inline constexpr const char* kCurveHeader =
    "run_seed,wall_clock_s,env_steps,eval_mean_distance,eval_mean_env_return";

inline std::string format_curve(const std::vector<CurvePoint>& curve, const std::string& hash) {
  std::string s = "# config_hash=" + hash + "\n" + kCurveHeader + "\n";
  for (const CurvePoint& p : curve)
    s += std::to_string(p.run_seed) + "," + detail::fmt(p.wall_clock_s) + "," +
         std::to_string(p.env_steps) + "," + detail::fmt(p.eval_mean_distance) + "," +
         detail::fmt(p.eval_mean_env_return) + "\n";
  return s;
}

struct CurveFile {
  std::string hash;
  std::vector<CurvePoint> curve;
};

inline std::string read_hash_line(std::istream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("# config_hash=", 0) != 0)
    throw DataError(path + ": first line must be '# config_hash=...'");
  return detail::trim(line.substr(14));
}

inline CurveFile read_curve(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  CurveFile f;
  f.hash = read_hash_line(in, path.string());
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kCurveHeader)
    throw SchemaError(path.string() + ": unexpected column header");
  int row = 2;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split(line, ',');
    const std::string where = path.string() + " row " + std::to_string(row);
    if (cells.size() != 5) throw DataError(where + ": expected 5 columns");
    CurvePoint p;
    p.run_seed = static_cast<std::uint64_t>(detail::to_int(cells[0], where));
    p.wall_clock_s = detail::to_double(cells[1], where);
    p.env_steps = detail::to_int(cells[2], where);
    p.eval_mean_distance = detail::to_double(cells[3], where);
    p.eval_mean_env_return = detail::to_double(cells[4], where);
    f.curve.push_back(p);
  }
  return f;
}

struct AggregateRow {
  std::int64_t env_steps = 0;
  double mean_distance = 0.0;
  double stderr_distance = 0.0;
  double mean_env_return = 0.0;
  double stderr_env_return = 0.0;
  std::size_t n = 0;
};

/// Mean and standard error (sample stddev with n-1, over sqrt(n)) per checkpoint.
inline std::vector<AggregateRow> aggregate_curves(const std::vector<std::vector<CurvePoint>>& curves) {
  if (curves.empty()) throw DataError("aggregate: no curves");
  const std::size_t len = curves.front().size();
  for (const auto& c : curves) {
    if (c.size() != len) throw DataError("aggregate: curves have different lengths");
    for (std::size_t i = 0; i < len; ++i)
      if (c[i].env_steps != curves.front()[i].env_steps)
        throw DataError("aggregate: curves use different eval schedules");
  }
  const auto n = curves.size();
  auto stats = [&](std::size_t i, auto field) {
    double sum = 0.0;
    for (const auto& c : curves) sum += field(c[i]);
    const double mean = sum / static_cast<double>(n);
    if (n < 2) return std::pair{mean, 0.0};
    double ss = 0.0;
    for (const auto& c : curves) ss += (field(c[i]) - mean) * (field(c[i]) - mean);
    return std::pair{mean, std::sqrt(ss / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n))};
  };
  std::vector<AggregateRow> rows(len);
  for (std::size_t i = 0; i < len; ++i) {
    rows[i].env_steps = curves.front()[i].env_steps;
    rows[i].n = n;
    std::tie(rows[i].mean_distance, rows[i].stderr_distance) =
        stats(i, [](const CurvePoint& p) { return p.eval_mean_distance; });
    std::tie(rows[i].mean_env_return, rows[i].stderr_env_return) =
        stats(i, [](const CurvePoint& p) { return p.eval_mean_env_return; });
  }
  return rows;
}

inline std::string format_aggregate(const std::vector<AggregateRow>& rows, const std::string& hash) {
  std::string s = "# config_hash=" + hash +
                  "\nenv_steps,mean_distance,stderr_distance,mean_env_return,stderr_env_return,n\n";
  for (const AggregateRow& r : rows)
    s += std::to_string(r.env_steps) + "," + detail::fmt(r.mean_distance) + "," +
         detail::fmt(r.stderr_distance) + "," + detail::fmt(r.mean_env_return) + "," +
         detail::fmt(r.stderr_env_return) + "," + std::to_string(r.n) + "\n";
  return s;
}

/// seed_<n>.csv files of one arm directory, in seed order.
inline std::vector<std::pair<std::uint64_t, fs::path>> seed_files(const fs::path& dir) {
  std::vector<std::pair<std::uint64_t, fs::path>> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string f = e.path().filename().string();
    if (f.rfind("seed_", 0) != 0 || e.path().extension() != ".csv" || f.find(".demo.") != std::string::npos)
      continue;
    const std::string num = f.substr(5, f.size() - 9);
    std::uint64_t v = 0;
    const auto r = std::from_chars(num.data(), num.data() + num.size(), v);
    if (r.ec == std::errc() && r.ptr == num.data() + num.size()) out.emplace_back(v, e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Aggregates one arm directory into aggregate.csv; returns the rows.
inline std::vector<AggregateRow> aggregate_arm_dir(const fs::path& dir) {
  const auto files = seed_files(dir);
  if (files.empty()) throw DataError("no seed_*.csv files in '" + dir.string() + "'");
  std::vector<std::vector<CurvePoint>> curves;
  std::string hash;
  for (const auto& [seed, path] : files) {
    CurveFile f = read_curve(path);
    if (hash.empty()) hash = f.hash;
    if (f.hash != hash) throw DataError(path.string() + ": config hash differs from the other seeds");
    curves.push_back(std::move(f.curve));
  }
  const auto rows = aggregate_curves(curves);
  detail::write_atomically(dir / "aggregate.csv", format_aggregate(rows, hash));
  return rows;
}

/// Aggregates `dir` itself if it holds seed files, else every arm directory below it.
inline std::vector<fs::path> aggregate_dir(const fs::path& dir) {
  std::vector<fs::path> done;
  if (!seed_files(dir).empty()) {
    aggregate_arm_dir(dir);
    done.push_back(dir);
    return done;
  }
  if (!fs::is_directory(dir)) throw DataError("'" + dir.string() + "' is not a directory");
  std::vector<fs::path> subs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && !seed_files(e.path()).empty()) subs.push_back(e.path());
  std::sort(subs.begin(), subs.end());
  if (subs.empty()) throw DataError("no seed_*.csv files under '" + dir.string() + "'");
  for (const auto& s : subs) {
    aggregate_arm_dir(s);
    done.push_back(s);
  }
  return done;
}

// ---------------------------------------------------------------- checkpoints

/// Actor file plus a key=value sidecar with the settings needed to roll it out.
inline void save_checkpoint(const fs::path& actor_path, const DdpgAgent& agent, const ArmSettings& arm,
                            std::int64_t clock_period, const std::string& hash, std::uint64_t seed,
                            std::int64_t env_steps) {
  std::ostringstream bin;
  save_mlp(agent.actor(), bin);
  detail::write_atomically(actor_path, bin.str());
  ArmSettings resolved = arm;
  resolved.clock_period = clock_period;
  std::string meta = "config_hash=" + hash + "\nseed=" + std::to_string(seed) +
                     "\nenv_steps=" + std::to_string(env_steps) + "\n" + canonical_text(resolved);
  fs::path meta_path = actor_path;
  meta_path.replace_extension(".meta");
  detail::write_atomically(meta_path, meta);
}

struct Checkpoint {
  Mlp<float> actor;
  ArmSettings arm;
  std::uint64_t seed = 0;
  std::int64_t env_steps = 0;
};

inline Checkpoint load_checkpoint(const fs::path& actor_path) {
  std::ifstream in(actor_path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + actor_path.string() + "'");
  Checkpoint c;
  c.actor = load_mlp(in, OutputActivation::kTanh);
  fs::path meta_path = actor_path;
  meta_path.replace_extension(".meta");
  if (fs::exists(meta_path)) {
    std::ifstream m(meta_path);
    for (const KeyValue& kv : parse_key_values(m, meta_path.string())) {
      if (kv.key == "seed") c.seed = static_cast<std::uint64_t>(detail::to_int(kv.value, "seed"));
      else if (kv.key == "env_steps") c.env_steps = detail::to_int(kv.value, "env_steps");
      else if (kv.key != "config_hash") set_arm_key(c.arm, kv.key, kv.value);
    }
  }
  const auto& top = c.actor.topology();
  if (top.front() != kNetInputSize || top.back() != kActionSize)
    throw ShapeError("checkpoint '" + actor_path.string() + "' maps " + std::to_string(top.front()) +
                     " inputs to " + std::to_string(top.back()) + " outputs; this environment needs " +
                     std::to_string(kNetInputSize) + " to " + std::to_string(kActionSize));
  c.arm.agent.hidden.assign(top.begin() + 1, top.end() - 1);
  if (!c.arm.clock_period) c.arm.clock_period = 0;
  return c;
}

// -------------------------------------------------------------- policy demos

/// Any deterministic controller over the control-rate environment.
using ControlPolicy = std::function<Action(const ControlEnv&)>;

struct RolloutSettings {
  EnvConfig env;
  int action_repeat = 3;
  FeatureMode features = FeatureMode::kFull;
  std::int64_t clock_period = 0;
};

/// Rolls `policy` out for `episodes` episodes (reset seeds as in evaluation)
/// and turns the pelvis-relative keypoints of the longest-distance episode,
/// one frame per control state, into a demo track in meters.
inline DemoTrack demo_from_policy(const ControlPolicy& policy, const RolloutSettings& rs, std::uint64_t seed,
                                  int episodes = 3) {
  if (episodes < 1) throw ConfigError("make_suboptimal_demo: episodes must be >= 1");
  std::vector<KeypointSet> best;
  double best_distance = 0.0;
  for (int e = 0; e < episodes; ++e) {
    ControlEnv env(rs.env, rs.action_repeat, rs.features, nullptr, rs.clock_period);
    env.reset(eval_seed(seed, e));
    std::vector<KeypointSet> kps{env.current_keypoints()};
    while (!env.done()) {
      env.step(policy(env));
      kps.push_back(env.current_keypoints());
    }
    const double distance = env.state().pelvis_pos.x() - env.initial_x();
    if (e == 0 || distance > best_distance) {
      best = std::move(kps);
      best_distance = distance;
    }
  }
  DemoTrack t;
  for (std::size_t i = 0; i < best.size(); ++i)
    t.frames.push_back(to_demo_frame(best[i], static_cast<std::int64_t>(i)));
  if (t.frames.size() < kMinDemoFrames)
    throw InsufficientDataError("policy episode lasted " + std::to_string(t.frames.size()) +
                                " control states; a demo needs at least " + std::to_string(kMinDemoFrames));
  t.comments = {"policy rollout, best of " + std::to_string(episodes) + " noise-free episodes, distance " +
                    detail::fmt(best_distance) + " m",
                "cadence: one frame per control step", "units=m"};
  return t;
}

/// The agent's noise-free actor as a control policy.
inline ControlPolicy actor_policy(DdpgAgent& agent) {
  return [&agent](const ControlEnv& env) {
    GaussianNoise silent(0, 0.0);
    return agent.act(env.observation(), false, silent, env.clock());
  };
}

inline RolloutSettings rollout_settings(const EnvConfig& env, const AgentConfig& cfg) {
  return {env, cfg.action_repeat, cfg.features, cfg.clock_period};
}

inline DemoTrack make_suboptimal_demo(const fs::path& checkpoint, const EnvConfig* env_override = nullptr,
                                      int episodes = 3) {
  const Checkpoint c = load_checkpoint(checkpoint);
  AgentConfig cfg = c.arm.agent;
  cfg.clock_period = *c.arm.clock_period;
  DdpgAgent agent(cfg, c.seed);
  agent.set_actor(c.actor);
  return demo_from_policy(actor_policy(agent), rollout_settings(env_override ? *env_override : c.arm.env, cfg),
                          c.seed, episodes);
}

/// Tracks in meters (policy rollouts) are used as recorded; drawn tracks are
/// rescaled to the simulated leg.
inline bool in_meters(const DemoTrack& t) {
  return std::find(t.comments.begin(), t.comments.end(), "units=m") != t.comments.end();
}

// ------------------------------------------------------------------- running

inline fs::path experiment_dir(const fs::path& out, const ExperimentConfig& cfg) { return out / cfg.name; }

inline fs::path bundled_demo_path(const ExperimentConfig& cfg, const std::string& demo) {
  if (demo == "human" || demo == "cartoon" || demo == "game") return fs::path(cfg.demo_dir) / (demo + ".csv");
  return demo;
}

/// Hash of everything that determines an arm's curves (seed excluded).
inline std::string arm_hash(const ExperimentConfig& cfg, const ArmSettings& a) {
  std::string text = "budget=" + std::to_string(cfg.arm_budget(a)) +
                     "\neval_every=" + std::to_string(cfg.eval_every) +
                     "\neval_episodes=" + std::to_string(cfg.eval_episodes) + "\n" + canonical_text(a);
  if (auto src = source_arm(a)) {
    text += "source=" + arm_hash(cfg, cfg.arm(*src)) + "\n";
  } else if (a.demo != "none") {
    text += "demo_bytes=" + detail::hex(detail::fnv1a(detail::read_file(bundled_demo_path(cfg, a.demo)))) + "\n";
  }
  return detail::hex(detail::fnv1a(text));
}

struct SeedOutcome {
  std::string arm;
  std::uint64_t seed = 0;
  bool ok = false;
  bool resumed = false;
  std::string error;
  std::vector<CurvePoint> curve;
};

struct RunReport {
  std::vector<SeedOutcome> outcomes;
  std::vector<fs::path> aggregates;

  bool ok() const {
    return std::all_of(outcomes.begin(), outcomes.end(), [](const SeedOutcome& o) { return o.ok; });
  }
  const SeedOutcome& find(const std::string& arm, std::uint64_t seed) const {
    for (const SeedOutcome& o : outcomes)
      if (o.arm == arm && o.seed == seed) return o;
    throw std::out_of_range("no outcome for " + arm + " seed " + std::to_string(seed));
  }
};

struct RunOptions {
  int threads = 0;  // 0: RUNNER_THREADS, else the hardware concurrency
  std::ostream* log = nullptr;
};

inline int runner_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("RUNNER_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace detail {

inline DemoTrack resolve_demo(const ExperimentConfig& cfg, const ArmSettings& a, const fs::path& dir,
                              std::uint64_t seed) {
  fs::path path;
  if (auto src = source_arm(a)) {
    const fs::path src_dir = dir / *src;
    path = src_dir / ("seed_" + std::to_string(seed) + ".demo.csv");
    if (!fs::exists(path)) {
      DemoTrack t = make_suboptimal_demo(src_dir / ("seed_" + std::to_string(seed) + ".actor.mlp"), &a.env);
      std::ostringstream os;
      write_demo(t, os);
      write_atomically(path, os.str());
    }
  } else {
    path = bundled_demo_path(cfg, a.demo);
  }
  DemoTrack t = load_demo(path.string());
  return in_meters(t) ? t : normalize(t, a.env.leg_length());
}

inline SeedOutcome run_seed(const ExperimentConfig& cfg, const ArmSettings& a, std::uint64_t seed,
                            const fs::path& dir, std::ostream* log, std::mutex& log_mutex) {
  SeedOutcome out;
  out.arm = a.name;
  out.seed = seed;
  const fs::path arm_dir = dir / a.name;
  const fs::path csv = arm_dir / ("seed_" + std::to_string(seed) + ".csv");
  const fs::path actor = arm_dir / ("seed_" + std::to_string(seed) + ".actor.mlp");
  try {
    const std::string hash = arm_hash(cfg, a);
    if (fs::exists(csv)) {
      CurveFile existing = read_curve(csv);
      if (existing.hash != hash)
        throw ConfigError(csv.string() + " was written by a different configuration (hash " + existing.hash +
                          ", now " + hash + "); refusing to overwrite");
      if (fs::exists(actor)) {
        out.curve = std::move(existing.curve);
        out.ok = out.resumed = true;
        return out;
      }
    }
    fs::create_directories(arm_dir);

    TrainingSpec spec;
    spec.env = a.env;
    spec.agent = a.agent;
    spec.seed = seed;
    spec.budget = cfg.arm_budget(a);
    spec.eval_every = cfg.eval_every;
    spec.eval_episodes = cfg.eval_episodes;
    if (a.demo != "none") {
      ShapingSetup sh;
      sh.demo = resolve_demo(cfg, a, dir, seed);
      sh.potential = a.potential;
      sh.source = a.demo;
      spec.agent.shaping = std::move(sh);
    }
    spec.agent.clock_period =
        a.clock_period ? *a.clock_period : static_cast<std::int64_t>(spec.agent.shaping->demo.frames.size());

    DdpgAgent agent(spec.agent, seed);
    const TrainingResult r = train(spec, agent, [&](const CurvePoint& p) {
      if (!log) return;
      std::lock_guard lock(log_mutex);
      *log << cfg.name << '/' << a.name << " seed " << seed << ": " << p.env_steps << " steps, distance "
           << p.eval_mean_distance << '\n';
    });
    save_checkpoint(actor, agent, a, spec.agent.clock_period, hash, seed, spec.budget);
    write_atomically(csv, format_curve(r.curve, hash));
    out.curve = r.curve;
    out.ok = true;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

}  // namespace detail

/// Runs every (arm, seed) pair, resuming finished ones, then aggregates each
/// arm. Arms that learn from another arm's policy run in a second phase. A
/// configuration-hash mismatch with existing files throws before any work.
inline RunReport run(const ExperimentConfig& cfg, const fs::path& out, const RunOptions& opt = {}) {
  cfg.validate();
  const fs::path dir = experiment_dir(out, cfg);
  for (const ArmSettings& a : cfg.arms) {
    const std::string hash = arm_hash(cfg, a);
    for (std::uint64_t s : cfg.seeds) {
      const fs::path csv = dir / a.name / ("seed_" + std::to_string(s) + ".csv");
      if (fs::exists(csv) && read_curve(csv).hash != hash)
        throw ConfigError(csv.string() + " was written by a different configuration; refusing to overwrite");
    }
  }

  RunReport report;
  std::mutex log_mutex;
  const int threads = runner_threads(opt.threads);
  for (int phase = 0; phase < 2; ++phase) {
    std::vector<std::pair<const ArmSettings*, std::uint64_t>> jobs;
    for (const ArmSettings& a : cfg.arms)
      if (source_arm(a).has_value() == (phase == 1))
        for (std::uint64_t s : cfg.seeds) jobs.emplace_back(&a, s);
    std::vector<SeedOutcome> results(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < jobs.size(); i = next++) {
        const auto& [arm, seed] = jobs[i];
        if (auto src = source_arm(*arm)) {
          const auto it = std::find_if(report.outcomes.begin(), report.outcomes.end(), [&](const SeedOutcome& o) {
            return o.arm == *src && o.seed == seed;
          });
          if (it == report.outcomes.end() || !it->ok) {
            results[i] = {arm->name, seed, false, false, "demo source arm '" + *src + "' failed for this seed", {}};
            continue;
          }
        }
        results[i] = detail::run_seed(cfg, *arm, seed, dir, opt.log, log_mutex);
      }
    };
    std::vector<std::thread> pool;
    const int n = std::min<int>(threads, static_cast<int>(jobs.size()));
    for (int t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (auto& r : results) report.outcomes.push_back(std::move(r));
  }

  if (!report.ok()) return report;
  // Only this run's seeds; the directory may hold others from earlier runs.
  for (const ArmSettings& a : cfg.arms) {
    std::vector<std::vector<CurvePoint>> curves;
    for (std::uint64_t s : cfg.seeds) curves.push_back(report.find(a.name, s).curve);
    const fs::path path = dir / a.name / "aggregate.csv";
    detail::write_atomically(path, format_aggregate(aggregate_curves(curves), arm_hash(cfg, a)));
    report.aggregates.push_back(path);
  }
  return report;
}

}  // namespace pbrs::harness
