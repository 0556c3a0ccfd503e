#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <string_view>

#include "pbrs/biped_sim.hpp"
#include "pbrs/demo_ingest.hpp"
#include "pbrs/error.hpp"

namespace pbrs {

/// Inverse-distance potentials over one body part's offset (dx, dy):
///   PF1  1 / (dx + dy)
///   PF2  1 / sqrt(dx^2 + dy^2)
///   PF3  1 / (dx^2 + dy^2)
enum class PotentialKind { PF1, PF2, PF3 };

inline std::string_view to_string(PotentialKind k) {
  switch (k) {
    case PotentialKind::PF1:
      return "PF1";
    case PotentialKind::PF2:
      return "PF2";
    case PotentialKind::PF3:
      return "PF3";
  }
  return "?";
}

inline PotentialKind parse_potential_kind(std::string_view s) {
  if (s == "PF1" || s == "pf1") return PotentialKind::PF1;
  if (s == "PF2" || s == "pf2") return PotentialKind::PF2;
  if (s == "PF3" || s == "pf3") return PotentialKind::PF3;
  throw ConfigError("unknown potential kind '" + std::string(s) + "' (expected PF1, PF2 or PF3)");
}

struct PotentialConfig {
  PotentialKind kind = PotentialKind::PF3;
  // Lower bound on each denominator; the potentials are singular at zero distance.
  double epsilon = 1e-3;
  // r_knee, l_knee, r_foot, l_foot.
  std::array<double, kDemoParts> part_weights{1.0, 1.0, 1.0, 1.0};
  // Must equal the learner's discount factor.
  double gamma = 0.9;
  // Optional absolute pelvis-height term. In pelvis-relative coordinates the
  // pelvis itself would always sit at distance zero, so it carries no signal
  // unless scored against an absolute height.
  double pelvis_weight = 0.0;
  double pelvis_target_height = 0.9;

  void validate() const {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon))
      throw ConfigError("PotentialConfig: epsilon must be > 0");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("PotentialConfig: gamma must be in (0, 1]");
    for (double w : part_weights)
      if (!(w >= 0.0) || !std::isfinite(w))
        throw ConfigError("PotentialConfig: part weights must be finite and >= 0");
    if (!(pelvis_weight >= 0.0) || !std::isfinite(pelvis_weight))
      throw ConfigError("PotentialConfig: pelvis_weight must be finite and >= 0");
  }
};

inline double part_potential(double dx, double dy, PotentialKind kind, double epsilon) {
  if (!(dx >= 0.0) || !(dy >= 0.0))
    throw ContractError("part_potential: dx and dy must be non-negative absolute differences");
  double denom = 0.0;
  switch (kind) {
    case PotentialKind::PF1:
      denom = dx + dy;
      break;
    case PotentialKind::PF2:
      denom = std::sqrt(dx * dx + dy * dy);
      break;
    case PotentialKind::PF3:
      denom = dx * dx + dy * dy;
      break;
  }
  return 1.0 / std::max(denom, epsilon);
}

/// Sum of per-part potentials between the agent's pelvis-relative keypoints
/// and a demonstration frame.
inline double state_potential(const KeypointSet& agent, const DemoFrame& target,
                              const PotentialConfig& cfg) {
  const DemoFrame rel = to_demo_frame(agent, target.frame_index);
  double phi = 0.0;
  for (int p = 0; p < kDemoParts; ++p) {
    if (cfg.part_weights[p] == 0.0) continue;
    const Vec2 d = (rel.parts[p] - target.parts[p]).cwiseAbs();
    phi += cfg.part_weights[p] * part_potential(d.x(), d.y(), cfg.kind, cfg.epsilon);
  }
  if (cfg.pelvis_weight > 0.0) {
    const double dy = std::abs(agent.pelvis.y() - cfg.pelvis_target_height);
    phi += cfg.pelvis_weight * part_potential(0.0, dy, cfg.kind, cfg.epsilon);
  }
  return phi;
}

/// F(s, s') = gamma * phi(s') - phi(s).
inline double shaping_reward(double phi_s, double phi_s_next, double gamma) {
  return gamma * phi_s_next - phi_s;
}

}  // namespace pbrs
