#pragma once

// Deterministic policy gradient agent (actor, critic, target copies, replay)
// driving the biped at a fixed control cadence, with optional potential-based
// shaping from a demonstration track.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pbrs/biped_sim.hpp"
#include "pbrs/demo_ingest.hpp"
#include "pbrs/error.hpp"
#include "pbrs/featurizer.hpp"
#include "pbrs/neural.hpp"
#include "pbrs/rng.hpp"
#include "pbrs/shaping.hpp"

namespace pbrs {

struct TrainHyper {
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  double gamma = 0.9;
  double tau = 0.005;
  int batch_size = 64;
  // Exploration: Gaussian, sigma decays linearly to `noise_sigma_final`.
  double noise_sigma = 0.2;
  double noise_sigma_final = 0.05;
  std::int64_t noise_decay_steps = 50'000;
  // Control steps collected before the first gradient update.
  std::int64_t warmup_steps = 1'000;
  // One gradient update every `update_every` control steps.
  int update_every = 1;

  void validate() const {
    auto require = [](bool ok, const char* what) {
      if (!ok) throw ConfigError(std::string("invalid TrainHyper: ") + what);
    };
    require(actor_lr > 0.0 && critic_lr > 0.0, "learning rates must be > 0");
    require(gamma > 0.0 && gamma <= 1.0, "gamma must be in (0, 1]");
    require(tau > 0.0 && tau <= 1.0, "tau must be in (0, 1]");
    require(batch_size >= 1, "batch_size must be >= 1");
    require(noise_sigma >= 0.0 && noise_sigma_final >= 0.0, "noise sigma must be >= 0");
    require(noise_decay_steps >= 0 && warmup_steps >= 0, "step counts must be >= 0");
    require(update_every >= 1, "update_every must be >= 1");
  }

  double sigma_at(std::int64_t control_step) const {
    if (noise_decay_steps <= 0) return noise_sigma_final;
    const double f = std::min(1.0, static_cast<double>(control_step) / noise_decay_steps);
    return noise_sigma + (noise_sigma_final - noise_sigma) * f;
  }
};

struct ShapingSetup {
  PotentialConfig potential;
  DemoTrack demo;  // normalized, pelvis-relative
  std::string source;
};

struct AgentConfig {
  std::vector<int> hidden = std::vector<int>(5, 128);
  TrainHyper hyper;
  int action_repeat = 3;
  bool mirror_augment = true;
  FeatureMode features = FeatureMode::kFull;
  std::size_t replay_capacity = 1'000'000;
  // Control steps per turn of the gait-phase clock fed to both networks; 0
  // disables it. Shaped runs normally set it to the demo length so the
  // phase-indexed potential is a function of what the agent observes.
  std::int64_t clock_period = 0;
  std::optional<ShapingSetup> shaping;

  void validate() const {
    hyper.validate();
    if (action_repeat < 1) throw ConfigError("AgentConfig: action_repeat must be >= 1");
    if (hidden.empty()) throw ConfigError("AgentConfig: at least one hidden layer is required");
    for (int w : hidden)
      if (w <= 0) throw ConfigError("AgentConfig: hidden widths must be > 0");
    if (clock_period < 0) throw ConfigError("AgentConfig: clock_period must be >= 0");
    if (replay_capacity < static_cast<std::size_t>(hyper.batch_size))
      throw ConfigError("AgentConfig: replay_capacity is smaller than batch_size");
    if (shaping) {
      shaping->potential.validate();
      if (shaping->potential.gamma != hyper.gamma)
        throw ConfigError("AgentConfig: shaping gamma (" + std::to_string(shaping->potential.gamma) +
                          ") must equal the agent's gamma (" + std::to_string(hyper.gamma) + ")");
      if (shaping->demo.frames.empty()) throw ConfigError("AgentConfig: shaping demo is empty");
    }
  }
};

/// Column-major float batch; one transition per column.
struct Batch {
  Eigen::MatrixXf obs;       // kNetInputSize x n (features then clock)
  Eigen::MatrixXf action;    // kActionSize x n
  Eigen::RowVectorXf reward; // env_reward + shaping_reward
  Eigen::MatrixXf next_obs;  // kNetInputSize x n
  Eigen::RowVectorXf done;   // 1 for terminal

  Eigen::Index size() const { return obs.cols(); }
};

inline Batch make_batch(const std::vector<Transition>& ts, bool with_mirror) {
  const Eigen::Index n = static_cast<Eigen::Index>(ts.size()) * (with_mirror ? 2 : 1);
  Batch b;
  b.obs.resize(kNetInputSize, n);
  b.action.resize(kActionSize, n);
  b.reward.resize(n);
  b.next_obs.resize(kNetInputSize, n);
  b.done.resize(n);
  Eigen::Index col = 0;
  auto put = [&](const Transition& t) {
    for (int i = 0; i < kFeatureSize; ++i) {
      b.obs(i, col) = static_cast<float>(t.obs[i]);
      b.next_obs(i, col) = static_cast<float>(t.next_obs[i]);
    }
    for (int i = 0; i < kClockSize; ++i) {
      b.obs(kFeatureSize + i, col) = static_cast<float>(t.clock[i]);
      b.next_obs(kFeatureSize + i, col) = static_cast<float>(t.next_clock[i]);
    }
    for (int i = 0; i < kActionSize; ++i) b.action(i, col) = static_cast<float>(t.action.torque[i]);
    b.reward(col) = static_cast<float>(t.env_reward + t.shaping_reward);
    b.done(col) = t.done ? 1.0f : 0.0f;
    ++col;
  };
  for (const Transition& t : ts) {
    put(t);
    if (with_mirror) put(mirror_transition(t));
  }
  return b;
}

/// Ring buffer of transitions with 32-bit numeric storage.
class ReplayBuffer {
 public:
  static constexpr int kStride = 2 * kNetInputSize + kActionSize + 3;

  ReplayBuffer(std::size_t capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {
    if (capacity == 0) throw ConfigError("ReplayBuffer: capacity must be > 0");
  }

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }

  void add(const Transition& t) {
    float* rec = nullptr;
    if (size_ < capacity_) {
      data_.resize((size_ + 1) * kStride);
      rec = data_.data() + size_ * kStride;
      ++size_;
    } else {
      rec = data_.data() + next_ * kStride;
    }
    next_ = (next_ + 1) % capacity_;
    for (int i = 0; i < kFeatureSize; ++i) rec[i] = static_cast<float>(t.obs[i]);
    for (int i = 0; i < kClockSize; ++i) rec[kFeatureSize + i] = static_cast<float>(t.clock[i]);
    for (int i = 0; i < kActionSize; ++i) rec[kNetInputSize + i] = static_cast<float>(t.action.torque[i]);
    float* tail = rec + kNetInputSize + kActionSize;
    tail[0] = static_cast<float>(t.env_reward);
    tail[1] = static_cast<float>(t.shaping_reward);
    for (int i = 0; i < kFeatureSize; ++i) tail[2 + i] = static_cast<float>(t.next_obs[i]);
    for (int i = 0; i < kClockSize; ++i) tail[2 + kFeatureSize + i] = static_cast<float>(t.next_clock[i]);
    tail[2 + kNetInputSize] = t.done ? 1.0f : 0.0f;
  }

  /// Stored transition widened back to double (values are float-rounded).
  Transition at(std::size_t i) const {
    const float* rec = data_.data() + i * kStride;
    Transition t;
    for (int k = 0; k < kFeatureSize; ++k) t.obs[k] = rec[k];
    for (int k = 0; k < kClockSize; ++k) t.clock[k] = rec[kFeatureSize + k];
    for (int k = 0; k < kActionSize; ++k) t.action.torque[k] = rec[kNetInputSize + k];
    const float* tail = rec + kNetInputSize + kActionSize;
    t.env_reward = tail[0];
    t.shaping_reward = tail[1];
    for (int k = 0; k < kFeatureSize; ++k) t.next_obs[k] = tail[2 + k];
    for (int k = 0; k < kClockSize; ++k) t.next_clock[k] = tail[2 + kFeatureSize + k];
    t.done = tail[2 + kNetInputSize] != 0.0f;
    return t;
  }

  /// Uniform sample with replacement.
  std::vector<Transition> sample(std::size_t n) {
    std::vector<Transition> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) out.push_back(at(static_cast<std::size_t>(rng_.below(size_))));
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t size_ = 0;
  std::size_t next_ = 0;
  std::vector<float> data_;
  SplitMix64 rng_;
};

class GaussianNoise {
 public:
  GaussianNoise(std::uint64_t seed, double sigma) : rng_(seed), sigma_(sigma) {}
  double sigma() const { return sigma_; }
  void set_sigma(double s) { sigma_ = s; }
  double sample() { return sigma_ * rng_.normal(); }

 private:
  SplitMix64 rng_;
  double sigma_;
};

struct TrainStats {
  double critic_loss = 0.0;
  double actor_objective = 0.0;
};

class DdpgAgent {
 public:
  using Net = Mlp<float>;

  DdpgAgent(const AgentConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    std::vector<int> actor_top{kNetInputSize};
    std::vector<int> critic_top{kNetInputSize + kActionSize};
    for (int w : config_.hidden) {
      actor_top.push_back(w);
      critic_top.push_back(w);
    }
    actor_top.push_back(kActionSize);
    critic_top.push_back(1);
    actor_ = Net(actor_top, OutputActivation::kTanh, derive_seed(seed, 1));
    critic_ = Net(critic_top, OutputActivation::kIdentity, derive_seed(seed, 2));
    actor_target_ = actor_;
    critic_target_ = critic_;
  }

  const AgentConfig& config() const { return config_; }
  const Net& actor() const { return actor_; }
  const Net& critic() const { return critic_; }
  const Net& actor_target() const { return actor_target_; }
  const Net& critic_target() const { return critic_target_; }
  Net& actor() { return actor_; }
  Net& critic() { return critic_; }
  Net& actor_target() { return actor_target_; }
  Net& critic_target() { return critic_target_; }

  /// Replaces the policy network (e.g. from a checkpoint).
  void set_actor(const Net& actor) {
    if (!actor.same_topology(actor_)) throw ShapeError("set_actor: topology mismatch");
    actor_ = actor;
    actor_target_ = actor;
  }

  std::int64_t actor_calls() const { return actor_calls_; }
  std::int64_t batch_contributions() const { return batch_contributions_; }
  std::int64_t sampled_transitions() const { return sampled_transitions_; }

  Action act(const FeatureVector& obs, bool explore, GaussianNoise& noise, const Clock& clock = {}) {
    ++actor_calls_;
    Net::Vector x(kNetInputSize);
    for (int i = 0; i < kFeatureSize; ++i) x(i) = static_cast<float>(obs[i]);
    for (int i = 0; i < kClockSize; ++i) x(kFeatureSize + i) = static_cast<float>(clock[i]);
    const Net::Vector y = actor_.forward(x);
    Action a;
    for (int i = 0; i < kActionSize; ++i) {
      double v = y(i);
      if (explore) v = std::clamp(v + noise.sample(), -1.0, 1.0);
      a.torque[i] = v;
    }
    return a;
  }

  double q_value(const FeatureVector& obs, const Action& action, const Clock& clock = {}) const {
    Net::Vector x(kNetInputSize + kActionSize);
    for (int i = 0; i < kFeatureSize; ++i) x(i) = static_cast<float>(obs[i]);
    for (int i = 0; i < kClockSize; ++i) x(kFeatureSize + i) = static_cast<float>(clock[i]);
    for (int i = 0; i < kActionSize; ++i) x(kNetInputSize + i) = static_cast<float>(action.torque[i]);
    return critic_.forward(x)(0);
  }

  /// y = r + F + gamma * Q'(s', mu'(s')) * (1 - done).
  Eigen::RowVectorXf critic_targets(const Batch& b) const {
    const Eigen::MatrixXf next_action = actor_target_.forward_batch(b.next_obs);
    const Eigen::MatrixXf next_q = critic_target_.forward_batch(stack(b.next_obs, next_action));
    const float gamma = static_cast<float>(config_.hyper.gamma);
    Eigen::RowVectorXf y = b.reward;
    y.array() += gamma * next_q.row(0).array() * (1.0f - b.done.array());
    return y;
  }

  /// One regression step of the critic toward `critic_targets`; returns the
  /// mean squared error before the step.
  double critic_update(const Batch& b) {
    const Eigen::RowVectorXf y = critic_targets(b);
    Net::Tape tape;
    const Eigen::MatrixXf q = critic_.forward_batch(stack(b.obs, b.action), tape);
    const Eigen::RowVectorXf err = q.row(0) - y;
    const float n = static_cast<float>(b.size());
    const Eigen::MatrixXf upstream = (2.0f / n) * err;
    critic_.adam_step(critic_.backward(tape, upstream), config_.hyper.critic_lr);
    return static_cast<double>(err.squaredNorm()) / n;
  }

  /// One ascent step of the actor along dQ/da * da/dtheta; returns mean Q
  /// before the step.
  double actor_update(const Batch& b) {
    Net::Tape actor_tape;
    const Eigen::MatrixXf a = actor_.forward_batch(b.obs, actor_tape);
    Net::Tape critic_tape;
    const Eigen::MatrixXf q = critic_.forward_batch(stack(b.obs, a), critic_tape);
    const float n = static_cast<float>(b.size());
    const Eigen::MatrixXf upstream = Eigen::MatrixXf::Constant(1, b.size(), -1.0f / n);
    const auto critic_grads = critic_.backward(critic_tape, upstream);
    const Eigen::MatrixXf dq_da = critic_grads.input_grad.bottomRows(kActionSize);
    actor_.adam_step(actor_.backward(actor_tape, dq_da), config_.hyper.actor_lr);
    return static_cast<double>(q.mean());
  }

  void update_targets() {
    soft_update(critic_target_, critic_, config_.hyper.tau);
    soft_update(actor_target_, actor_, config_.hyper.tau);
  }

  TrainStats train_on(const Batch& b) {
    TrainStats s;
    s.critic_loss = critic_update(b);
    s.actor_objective = actor_update(b);
    update_targets();
    return s;
  }

  /// Samples a minibatch (doubled with mirrored copies when enabled) and runs
  /// one critic, actor and target update. Returns nullopt when the buffer
  /// holds fewer than `batch_size` transitions.
  std::optional<TrainStats> train_batch(ReplayBuffer& buffer) {
    const auto n = static_cast<std::size_t>(config_.hyper.batch_size);
    if (buffer.size() < n) return std::nullopt;
    const auto sampled = buffer.sample(n);
    const Batch b = make_batch(sampled, config_.mirror_augment);
    sampled_transitions_ += static_cast<std::int64_t>(n);
    batch_contributions_ += b.size();
    return train_on(b);
  }

 private:
  static Eigen::MatrixXf stack(const Eigen::MatrixXf& obs, const Eigen::MatrixXf& action) {
    Eigen::MatrixXf x(obs.rows() + action.rows(), obs.cols());
    x.topRows(obs.rows()) = obs;
    x.bottomRows(action.rows()) = action;
    return x;
  }

  AgentConfig config_;
  Net actor_;
  Net critic_;
  Net actor_target_;
  Net critic_target_;
  std::int64_t actor_calls_ = 0;
  std::int64_t batch_contributions_ = 0;
  std::int64_t sampled_transitions_ = 0;
};

struct PhysicsRecord {
  SimState state;  // after the physics step
  Action action;
  double reward = 0.0;
  double effort = 0.0;
  bool done = false;
};

struct ControlStepResult {
  Transition transition;
  std::vector<PhysicsRecord> physics;
  double phi_before = 0.0;
  double phi_after = 0.0;
  bool fell = false;
  bool done = false;
};

/// The biped seen at control cadence: each action is held for
/// `action_repeat` physics steps and produces one transition whose reward is
/// the sum over those steps.
class ControlEnv {
 public:
  ControlEnv(EnvConfig env, int action_repeat, FeatureMode features,
             const ShapingSetup* shaping = nullptr, std::int64_t clock_period = 0)
      : env_(std::move(env)),
        action_repeat_(action_repeat),
        features_(features),
        shaping_(shaping),
        clock_period_(clock_period) {
    env_.validate();
    if (action_repeat_ < 1) throw ConfigError("ControlEnv: action_repeat must be >= 1");
  }

  const EnvConfig& env_config() const { return env_; }
  int action_repeat() const { return action_repeat_; }
  double dt_control() const { return env_.dt * action_repeat_; }
  const SimState& state() const { return state_; }
  std::int64_t control_step() const { return control_step_; }
  bool done() const { return done_; }
  const FeatureVector& observation() const { return obs_; }
  Clock clock() const { return phase_clock(control_step_, clock_period_); }
  const KeypointSet& current_keypoints() const { return current_keypoints_; }
  double initial_x() const { return initial_x_; }
  double potential() const { return phi_; }

  FeatureVector reset(std::uint64_t seed) { return reset_to(pbrs::reset(env_, seed)); }

  FeatureVector reset_to(const SimState& s) {
    state_ = s;
    control_step_ = 0;
    done_ = false;
    initial_x_ = s.pelvis_pos.x();
    history_.clear();
    current_keypoints_ = keypoints(state_, env_);
    history_.push(current_keypoints_);
    obs_ = build_observation(history_.window(), state_, dt_control(), features_);
    phi_ = compute_potential();
    return obs_;
  }

  ControlStepResult step(const Action& action) {
    if (done_) throw ContractError("ControlEnv::step called on a finished episode");
    ControlStepResult r;
    r.transition.obs = obs_;
    r.transition.clock = clock();
    r.transition.action = clamp_action(action);
    r.phi_before = phi_;
    double reward = 0.0;
    for (int k = 0; k < action_repeat_ && !done_; ++k) {
      const StepResult sr = pbrs::step(state_, r.transition.action, env_);
      state_ = sr.state;
      reward += sr.reward;
      done_ = sr.done;
      r.physics.push_back({state_, r.transition.action, sr.reward, sr.effort, sr.done});
    }
    ++control_step_;
    current_keypoints_ = keypoints(state_, env_);
    history_.push(current_keypoints_);
    obs_ = build_observation(history_.window(), state_, dt_control(), features_);
    r.fell = fallen(state_, env_);
    // A fall is absorbing; terminal states carry zero potential.
    phi_ = r.fell ? 0.0 : compute_potential();
    r.phi_after = phi_;
    r.done = done_;

    Transition& t = r.transition;
    t.env_reward = reward;
    t.shaping_reward =
        shaping_ ? shaping_reward(r.phi_before, r.phi_after, shaping_->potential.gamma) : 0.0;
    t.next_obs = obs_;
    t.next_clock = clock();
    // Only a fall is terminal; hitting the step limit is a truncation and keeps
    // its bootstrap term.
    t.done = r.fell;
    return r;
  }

 private:
  double compute_potential() const {
    if (!shaping_) return 0.0;
    return state_potential(current_keypoints_, phase_lookup(shaping_->demo, control_step_),
                           shaping_->potential);
  }

  EnvConfig env_;
  int action_repeat_;
  FeatureMode features_;
  const ShapingSetup* shaping_;
  std::int64_t clock_period_;
  SimState state_;
  KeypointHistory history_;
  KeypointSet current_keypoints_;
  FeatureVector obs_{};
  std::int64_t control_step_ = 0;
  double initial_x_ = 0.0;
  double phi_ = 0.0;
  bool done_ = true;
};

/// One actor evaluation followed by `action_repeat` physics steps.
inline ControlStepResult rollout_step(ControlEnv& env, DdpgAgent& agent, GaussianNoise& noise,
                                      bool explore) {
  return env.step(agent.act(env.observation(), explore, noise, env.clock()));
}

struct EpisodeSummary {
  double distance = 0.0;    // final pelvis x minus initial pelvis x
  double env_return = 0.0;  // undiscounted sum of environment rewards (never shaped)
  std::int64_t control_steps = 0;
  std::vector<KeypointSet> control_keypoints;  // one per control state, incl. the initial one
};

/// Noise-free episode; shaping is never applied during evaluation.
inline EpisodeSummary run_episode(const EnvConfig& env_config, const AgentConfig& config,
                                  DdpgAgent& agent, std::uint64_t seed, bool keep_keypoints = false) {
  ControlEnv env(env_config, config.action_repeat, config.features, nullptr, config.clock_period);
  env.reset(seed);
  GaussianNoise silent(0, 0.0);
  EpisodeSummary s;
  if (keep_keypoints) s.control_keypoints.push_back(env.current_keypoints());
  while (!env.done()) {
    const ControlStepResult r = rollout_step(env, agent, silent, false);
    s.env_return += r.transition.env_reward;
    ++s.control_steps;
    if (keep_keypoints) s.control_keypoints.push_back(env.current_keypoints());
  }
  s.distance = env.state().pelvis_pos.x() - env.initial_x();
  return s;
}

struct EvalResult {
  double mean_distance = 0.0;
  double mean_env_return = 0.0;
};

inline std::uint64_t eval_seed(std::uint64_t run_seed, int episode) {
  return derive_seed(run_seed, 10'000 + static_cast<std::uint64_t>(episode));
}

inline EvalResult evaluate(const EnvConfig& env_config, const AgentConfig& config, DdpgAgent& agent,
                           std::uint64_t run_seed, int episodes) {
  EvalResult r;
  for (int e = 0; e < episodes; ++e) {
    const EpisodeSummary s = run_episode(env_config, config, agent, eval_seed(run_seed, e));
    r.mean_distance += s.distance;
    r.mean_env_return += s.env_return;
  }
  r.mean_distance /= episodes;
  r.mean_env_return /= episodes;
  return r;
}

struct CurvePoint {
  std::uint64_t run_seed = 0;
  // Simulated seconds (physics steps x dt): a reproducible stand-in for
  // elapsed time.
  double wall_clock_s = 0.0;
  std::int64_t env_steps = 0;  // control steps
  double eval_mean_distance = 0.0;
  double eval_mean_env_return = 0.0;

  bool operator==(const CurvePoint&) const = default;
};

struct TrainingSpec {
  EnvConfig env;
  AgentConfig agent;
  std::uint64_t seed = 1;
  std::int64_t budget = 300'000;  // control steps
  std::int64_t eval_every = 10'000;
  int eval_episodes = 3;

  void validate() const {
    env.validate();
    agent.validate();
    if (budget <= 0) throw ConfigError("TrainingSpec: budget must be > 0");
    if (eval_every <= 0) throw ConfigError("TrainingSpec: eval_every must be > 0");
    if (eval_episodes <= 0) throw ConfigError("TrainingSpec: eval_episodes must be > 0");
  }
};

struct TrainingResult {
  std::vector<CurvePoint> curve;
  std::int64_t physics_steps = 0;
  std::int64_t episodes = 0;
  std::int64_t updates = 0;
};

using CurveCallback = std::function<void(const CurvePoint&)>;

/// Full training run. Deterministic for a given spec.
inline TrainingResult train(const TrainingSpec& spec, DdpgAgent& agent,
                            const CurveCallback& on_point = {}) {
  spec.validate();
  const AgentConfig& cfg = agent.config();
  const ShapingSetup* shaping = cfg.shaping ? &*cfg.shaping : nullptr;
  ControlEnv env(spec.env, cfg.action_repeat, cfg.features, shaping, cfg.clock_period);
  ReplayBuffer buffer(std::min<std::size_t>(cfg.replay_capacity,
                                            static_cast<std::size_t>(spec.budget)),
                      derive_seed(spec.seed, 3));
  GaussianNoise noise(derive_seed(spec.seed, 4), cfg.hyper.noise_sigma);

  TrainingResult result;
  std::int64_t episode = 0;
  env.reset(derive_seed(spec.seed, 100 + static_cast<std::uint64_t>(episode)));
  for (std::int64_t t = 1; t <= spec.budget; ++t) {
    if (env.done()) {
      ++episode;
      env.reset(derive_seed(spec.seed, 100 + static_cast<std::uint64_t>(episode)));
    }
    noise.set_sigma(cfg.hyper.sigma_at(t - 1));
    const ControlStepResult r = rollout_step(env, agent, noise, true);
    result.physics_steps += static_cast<std::int64_t>(r.physics.size());
    buffer.add(r.transition);

    if (t > cfg.hyper.warmup_steps && t % cfg.hyper.update_every == 0)
      if (agent.train_batch(buffer)) ++result.updates;

    if (t % spec.eval_every == 0 || t == spec.budget) {
      const EvalResult e = evaluate(spec.env, cfg, agent, spec.seed, spec.eval_episodes);
      CurvePoint p;
      p.run_seed = spec.seed;
      p.wall_clock_s = static_cast<double>(result.physics_steps) * spec.env.dt;
      p.env_steps = t;
      p.eval_mean_distance = e.mean_distance;
      p.eval_mean_env_return = e.mean_env_return;
      result.curve.push_back(p);
      if (on_point) on_point(p);
    }
  }
  result.episodes = episode + 1;
  return result;
}

}  // namespace pbrs
