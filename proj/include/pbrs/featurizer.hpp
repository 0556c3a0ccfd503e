#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

#include "pbrs/biped_sim.hpp"
#include "pbrs/error.hpp"

namespace pbrs {

inline constexpr int kBaseFeatures = 16;
inline constexpr int kKeypointFeatures = 8;
inline constexpr int kFeatureSize = kBaseFeatures + 3 * kKeypointFeatures;  // 40
inline constexpr int kActionSize = kNumJoints;

/// Observation layout:
///   [0, 16)   pelvis rot, pelvis vel x/y, pelvis angvel, 6 joint angles, 6 joint angvels
///   [16, 24)  r_knee, l_knee, r_foot, l_foot relative to the pelvis (x, y each)
///   [24, 32)  velocities of those relative positions
///   [32, 40)  accelerations of those relative positions
using FeatureVector = std::array<double, kFeatureSize>;

enum class FeatureMode {
  kFull,      // pelvis-centered keypoints with velocities and accelerations
  kBaseOnly,  // keypoint blocks zero-filled (ablation)
};

/// Gait-phase clock (sin, cos) given to the networks next to the features.
/// All zeros when the agent runs without a clock.
inline constexpr int kClockSize = 2;
using Clock = std::array<double, kClockSize>;
inline constexpr int kNetInputSize = kFeatureSize + kClockSize;

inline Clock phase_clock(std::int64_t control_step, std::int64_t period) {
  if (period <= 0) return {0.0, 0.0};
  const std::int64_t k = ((control_step % period) + period) % period;
  const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(period);
  return {std::sin(angle), std::cos(angle)};
}

/// Swapping legs of a periodic gait is the same as shifting it half a cycle.
inline Clock mirror_clock(const Clock& c) { return {-c[0], -c[1]}; }

struct Transition {
  FeatureVector obs{};
  Clock clock{};
  Action action;
  double env_reward = 0.0;
  double shaping_reward = 0.0;
  FeatureVector next_obs{};
  Clock next_clock{};
  bool done = false;

  bool operator==(const Transition&) const = default;
};

namespace detail {

inline std::array<double, kKeypointFeatures> relative_keypoints(const KeypointSet& k) {
  const Vec2 parts[4] = {k.r_knee - k.pelvis, k.l_knee - k.pelvis, k.r_foot - k.pelvis,
                         k.l_foot - k.pelvis};
  std::array<double, kKeypointFeatures> out{};
  for (int p = 0; p < 4; ++p) {
    out[2 * p] = parts[p].x();
    out[2 * p + 1] = parts[p].y();
  }
  return out;
}

}  // namespace detail

/// `window` holds the most recent keypoint frames, oldest first, one per
/// control step; the last entry must correspond to `state`. Fewer than three
/// frames are padded by repeating the first one.
inline FeatureVector build_observation(std::span<const KeypointSet> window, const SimState& state,
                                       double dt_control, FeatureMode mode = FeatureMode::kFull) {
  if (!(dt_control > 0.0) || !std::isfinite(dt_control))
    throw ConfigError("build_observation: dt_control must be > 0");
  if (window.empty()) throw ContractError("build_observation: empty keypoint window");

  FeatureVector f{};
  f[0] = state.pelvis_rot;
  f[1] = state.pelvis_vel.x();
  f[2] = state.pelvis_vel.y();
  f[3] = state.pelvis_angvel;
  for (int j = 0; j < kNumJoints; ++j) {
    f[4 + j] = state.joint_angle[j];
    f[10 + j] = state.joint_angvel[j];
  }
  if (mode == FeatureMode::kBaseOnly) return f;

  const std::size_t n = window.size();
  const KeypointSet& k0 = window[n - 1];
  const KeypointSet& k1 = n >= 2 ? window[n - 2] : window[0];
  const KeypointSet& k2 = n >= 3 ? window[n - 3] : window[0];
  const auto p0 = detail::relative_keypoints(k0);
  const auto p1 = detail::relative_keypoints(k1);
  const auto p2 = detail::relative_keypoints(k2);
  const double inv_dt = 1.0 / dt_control;
  const double inv_dt2 = inv_dt * inv_dt;
  for (int i = 0; i < kKeypointFeatures; ++i) {
    f[kBaseFeatures + i] = p0[i];
    f[kBaseFeatures + kKeypointFeatures + i] = (p0[i] - p1[i]) * inv_dt;
    f[kBaseFeatures + 2 * kKeypointFeatures + i] = (p0[i] - 2.0 * p1[i] + p2[i]) * inv_dt2;
  }
  return f;
}

/// Left/right exchange of an observation.
inline FeatureVector mirror_features(const FeatureVector& f) {
  FeatureVector m = f;
  for (int j = 0; j < 3; ++j) {
    std::swap(m[4 + j], m[7 + j]);
    std::swap(m[10 + j], m[13 + j]);
  }
  for (int block = 0; block < 3; ++block) {
    const int base = kBaseFeatures + block * kKeypointFeatures;
    // (r_knee, l_knee) and (r_foot, l_foot) pairs, two coordinates each.
    for (int pair = 0; pair < 2; ++pair) {
      const int r = base + 4 * pair;
      std::swap(m[r], m[r + 2]);
      std::swap(m[r + 1], m[r + 3]);
    }
  }
  return m;
}

inline Transition mirror_transition(const Transition& t) {
  Transition m = t;
  m.obs = mirror_features(t.obs);
  m.next_obs = mirror_features(t.next_obs);
  m.clock = mirror_clock(t.clock);
  m.next_clock = mirror_clock(t.next_clock);
  m.action = mirror(t.action);
  return m;
}

/// Fixed-size history of control-step keypoints feeding `build_observation`.
class KeypointHistory {
 public:
  void clear() { size_ = 0; }

  void push(const KeypointSet& k) {
    if (size_ < 3) {
      frames_[size_++] = k;
      return;
    }
    frames_[0] = frames_[1];
    frames_[1] = frames_[2];
    frames_[2] = k;
  }

  std::span<const KeypointSet> window() const { return {frames_.data(), size_}; }

 private:
  std::array<KeypointSet, 3> frames_{};
  std::size_t size_ = 0;
};

}  // namespace pbrs
