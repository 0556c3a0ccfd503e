#pragma once

// Planar (sagittal) biped: a free-floating pelvis with two three-segment legs
// (thigh, shank, foot), torque-actuated hips, knees and ankles, and penalty
// ground contact at each heel and toe.
//
// Generalized coordinates: [pelvis_x, pelvis_y, pelvis_rot, r_hip, r_knee,
// r_ankle, l_hip, l_knee, l_ankle]. Segment directions are measured from the
// downward vertical, counter-clockwise positive, so a positive hip angle
// swings the thigh forward (+x) and knee flexion is negative.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "pbrs/error.hpp"
#include "pbrs/rng.hpp"

namespace pbrs {

using Vec2 = Eigen::Vector2d;

inline constexpr int kNumJoints = 6;
inline constexpr int kNumDofs = 9;

enum JointIndex : int {
  kRightHip = 0,
  kRightKnee = 1,
  kRightAnkle = 2,
  kLeftHip = 3,
  kLeftKnee = 4,
  kLeftAnkle = 5,
};

using JointArray = std::array<double, kNumJoints>;

struct JointLimit {
  double lower = 0.0;
  double upper = 0.0;
};

struct EnvConfig {
  double dt = 0.01;
  // Semi-implicit Euler sub-steps per `dt`; keeps the penalty contact stable.
  int substeps = 10;
  double gravity = 9.81;

  double thigh_length = 0.45;
  double shank_length = 0.45;
  double toe_length = 0.16;  // ankle to toe
  double heel_length = 0.05;  // ankle to heel

  double pelvis_mass = 30.0;
  double pelvis_inertia = 1.5;
  double thigh_mass = 7.0;
  double shank_mass = 3.5;
  double foot_mass = 1.0;

  // Per joint of one leg: hip, knee, ankle.
  std::array<JointLimit, 3> joint_limits{{{-0.9, 1.6}, {-2.4, 0.05}, {-0.8, 0.8}}};
  std::array<double, 3> torque_scale{100.0, 100.0, 60.0};
  double joint_damping = 1.0;

  double ground_stiffness = 5.0e4;
  double ground_damping = 1.0e3;
  double friction_coeff = 1.0;
  // Viscous slip coefficient, saturated by the Coulomb cone.
  double friction_damping = 1.0e3;

  double fall_height_threshold = 0.6 * 0.9;
  // Pelvis tilt (|rot|, radians) beyond which the episode also counts as a
  // fall. Without it a free pelvis can cartwheel forward.
  double fall_tilt_threshold = 1.0;
  int max_steps = 1000;
  double effort_cost_coeff = 0.05;
  // Half-width (radians) of the uniform joint-angle jitter applied by reset().
  double reset_noise = 0.01;

  double standing_height() const { return thigh_length + shank_length; }
  double leg_length() const { return thigh_length + shank_length; }

  void validate() const;
};

struct SimState {
  Vec2 pelvis_pos = Vec2::Zero();
  double pelvis_rot = 0.0;
  Vec2 pelvis_vel = Vec2::Zero();
  double pelvis_angvel = 0.0;
  JointArray joint_angle{};
  JointArray joint_angvel{};
  std::int64_t step_index = 0;
  std::uint64_t rng_state = 0;

  bool operator==(const SimState&) const = default;
};

/// Normalized joint torques; each component is clamped to [-1, 1] before use.
struct Action {
  JointArray torque{};

  bool operator==(const Action&) const = default;
};

struct KeypointSet {
  Vec2 pelvis = Vec2::Zero();
  Vec2 r_knee = Vec2::Zero();
  Vec2 l_knee = Vec2::Zero();
  Vec2 r_foot = Vec2::Zero();
  Vec2 l_foot = Vec2::Zero();

  bool operator==(const KeypointSet&) const = default;
};

struct StepResult {
  SimState state;
  double reward = 0.0;
  bool done = false;
  // Components of `reward`, kept for logging and decomposition checks.
  double progress = 0.0;
  double effort = 0.0;
};

inline void EnvConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("invalid EnvConfig: ") + what);
  };
  require(std::isfinite(dt) && dt > 0.0, "dt must be > 0");
  require(substeps >= 1, "substeps must be >= 1");
  require(thigh_length > 0.0 && shank_length > 0.0, "segment lengths must be > 0");
  require(toe_length > 0.0 && heel_length >= 0.0, "foot lengths must be > 0");
  require(pelvis_mass > 0.0 && thigh_mass > 0.0 && shank_mass > 0.0 && foot_mass > 0.0,
          "masses must be > 0");
  require(pelvis_inertia > 0.0, "pelvis inertia must be > 0");
  require(max_steps > 0, "max_steps must be > 0");
  require(fall_tilt_threshold > 0.0, "fall_tilt_threshold must be > 0");
  require(ground_stiffness >= 0.0 && ground_damping >= 0.0 && friction_coeff >= 0.0 &&
              friction_damping >= 0.0,
          "contact coefficients must be >= 0");
  require(effort_cost_coeff >= 0.0, "effort_cost_coeff must be >= 0");
  require(std::isfinite(reset_noise) && reset_noise >= 0.0, "reset_noise must be >= 0");
  for (const auto& lim : joint_limits) require(lim.lower <= lim.upper, "joint limit lower > upper");
  for (double s : torque_scale) require(s >= 0.0, "torque_scale must be >= 0");
}

namespace detail {

// Unit direction of a segment hanging at angle phi from the downward vertical.
inline Vec2 limb_dir(double phi) { return {std::sin(phi), -std::cos(phi)}; }
// Unit direction of the foot, perpendicular to the shank and pointing forward.
inline Vec2 foot_dir(double phi) { return {std::cos(phi), std::sin(phi)}; }
inline Vec2 perp(const Vec2& u) { return {-u.y(), u.x()}; }

using Jacobian = Eigen::Matrix<double, 2, kNumDofs>;
using AngleRow = Eigen::Matrix<double, 1, kNumDofs>;
using Dofs = Eigen::Matrix<double, kNumDofs, 1>;
using MassMatrix = Eigen::Matrix<double, kNumDofs, kNumDofs>;

struct LegAngles {
  std::array<double, 3> phi;    // thigh, shank, foot absolute angles
  std::array<double, 3> omega;  // their rates
};

inline LegAngles leg_angles(const SimState& s, int side) {
  const int o = 3 * side;
  LegAngles a{};
  a.phi[0] = s.pelvis_rot + s.joint_angle[o];
  a.phi[1] = a.phi[0] + s.joint_angle[o + 1];
  a.phi[2] = a.phi[1] + s.joint_angle[o + 2];
  a.omega[0] = s.pelvis_angvel + s.joint_angvel[o];
  a.omega[1] = a.omega[0] + s.joint_angvel[o + 1];
  a.omega[2] = a.omega[1] + s.joint_angvel[o + 2];
  return a;
}

// A point rigidly attached to a leg, expressed as offsets along the thigh,
// shank and foot directions from the hip (which coincides with the pelvis).
struct LegPoint {
  std::array<double, 3> offset{};
};

struct PointKinematics {
  Vec2 pos;
  Vec2 vel;
  Jacobian jac;
  Vec2 bias_acc;  // acceleration at zero generalized acceleration
};

inline PointKinematics eval_point(const SimState& s, const LegAngles& a, int side,
                                  const LegPoint& p) {
  PointKinematics k;
  k.pos = s.pelvis_pos;
  k.vel = s.pelvis_vel;
  k.jac.setZero();
  k.jac(0, 0) = 1.0;
  k.jac(1, 1) = 1.0;
  k.bias_acc.setZero();
  const int o = 3 + 3 * side;
  for (int seg = 0; seg < 3; ++seg) {
    const double c = p.offset[seg];
    if (c == 0.0) continue;
    const Vec2 u = seg < 2 ? limb_dir(a.phi[seg]) : foot_dir(a.phi[seg]);
    const Vec2 du = perp(u);
    k.pos += c * u;
    k.vel += c * a.omega[seg] * du;
    k.bias_acc -= c * a.omega[seg] * a.omega[seg] * u;
    // Segment angle depends on pelvis rotation and every joint up to `seg`.
    k.jac.col(2) += c * du;
    for (int j = 0; j <= seg; ++j) k.jac.col(o + j) += c * du;
  }
  return k;
}

inline AngleRow angle_row(int side, int seg) {
  AngleRow r = AngleRow::Zero();
  r(2) = 1.0;
  for (int j = 0; j <= seg; ++j) r(3 + 3 * side + j) = 1.0;
  return r;
}

inline Dofs pack_q(const SimState& s) {
  Dofs q;
  q << s.pelvis_pos.x(), s.pelvis_pos.y(), s.pelvis_rot, s.joint_angle[0], s.joint_angle[1],
      s.joint_angle[2], s.joint_angle[3], s.joint_angle[4], s.joint_angle[5];
  return q;
}

inline Dofs pack_qd(const SimState& s) {
  Dofs v;
  v << s.pelvis_vel.x(), s.pelvis_vel.y(), s.pelvis_angvel, s.joint_angvel[0], s.joint_angvel[1],
      s.joint_angvel[2], s.joint_angvel[3], s.joint_angvel[4], s.joint_angvel[5];
  return v;
}

inline void unpack(const Dofs& q, const Dofs& qd, SimState& s) {
  s.pelvis_pos = {q(0), q(1)};
  s.pelvis_rot = q(2);
  s.pelvis_vel = {qd(0), qd(1)};
  s.pelvis_angvel = qd(2);
  for (int j = 0; j < kNumJoints; ++j) {
    s.joint_angle[j] = q(3 + j);
    s.joint_angvel[j] = qd(3 + j);
  }
}

inline bool all_finite(const SimState& s) {
  bool ok = s.pelvis_pos.allFinite() && s.pelvis_vel.allFinite() && std::isfinite(s.pelvis_rot) &&
            std::isfinite(s.pelvis_angvel);
  for (int j = 0; j < kNumJoints; ++j)
    ok = ok && std::isfinite(s.joint_angle[j]) && std::isfinite(s.joint_angvel[j]);
  return ok;
}

inline std::string describe(const SimState& s) {
  std::ostringstream os;
  os << std::setprecision(9) << "step=" << s.step_index << " pelvis=(" << s.pelvis_pos.x() << ","
     << s.pelvis_pos.y() << "," << s.pelvis_rot << ") vel=(" << s.pelvis_vel.x() << ","
     << s.pelvis_vel.y() << "," << s.pelvis_angvel << ") q=[";
  for (int j = 0; j < kNumJoints; ++j) os << (j ? "," : "") << s.joint_angle[j];
  os << "] qd=[";
  for (int j = 0; j < kNumJoints; ++j) os << (j ? "," : "") << s.joint_angvel[j];
  os << "]";
  return os.str();
}

struct LegBody {
  LegPoint com;
  double mass;
  double inertia;
  int seg;
};

inline std::array<LegBody, 3> leg_bodies(const EnvConfig& c) {
  const double foot_len = c.toe_length + c.heel_length;
  const double foot_com = 0.5 * (c.toe_length - c.heel_length);
  return {{
      {{{0.5 * c.thigh_length, 0.0, 0.0}}, c.thigh_mass,
       c.thigh_mass * c.thigh_length * c.thigh_length / 12.0, 0},
      {{{c.thigh_length, 0.5 * c.shank_length, 0.0}}, c.shank_mass,
       c.shank_mass * c.shank_length * c.shank_length / 12.0, 1},
      {{{c.thigh_length, c.shank_length, foot_com}}, c.foot_mass,
       c.foot_mass * foot_len * foot_len / 12.0, 2},
  }};
}

inline std::array<LegPoint, 2> contact_points(const EnvConfig& c) {
  return {{{{c.thigh_length, c.shank_length, -c.heel_length}},
           {{c.thigh_length, c.shank_length, c.toe_length}}}};
}

// One semi-implicit Euler sub-step of length h with normalized torques `u`.
inline void substep(SimState& s, const JointArray& u, const EnvConfig& c, double h) {
  MassMatrix mass = MassMatrix::Zero();
  Dofs force = Dofs::Zero();

  mass(0, 0) += c.pelvis_mass;
  mass(1, 1) += c.pelvis_mass;
  mass(2, 2) += c.pelvis_inertia;
  force(1) -= c.pelvis_mass * c.gravity;

  const auto bodies = leg_bodies(c);
  const auto contacts = contact_points(c);
  const Vec2 gravity{0.0, -c.gravity};

  for (int side = 0; side < 2; ++side) {
    const LegAngles a = leg_angles(s, side);
    for (const LegBody& b : bodies) {
      const PointKinematics k = eval_point(s, a, side, b.com);
      const AngleRow r = angle_row(side, b.seg);
      mass.noalias() += b.mass * k.jac.transpose() * k.jac;
      mass.noalias() += b.inertia * r.transpose() * r;
      force.noalias() += k.jac.transpose() * (b.mass * (gravity - k.bias_acc));
    }
    for (const LegPoint& p : contacts) {
      const PointKinematics k = eval_point(s, a, side, p);
      if (k.pos.y() >= 0.0) continue;
      const double fn =
          std::max(0.0, -c.ground_stiffness * k.pos.y() - c.ground_damping * k.vel.y());
      const double limit = c.friction_coeff * fn;
      const double ft = std::clamp(-c.friction_damping * k.vel.x(), -limit, limit);
      force.noalias() += k.jac.transpose() * Vec2(ft, fn);
    }
    for (int j = 0; j < 3; ++j) {
      const int idx = 3 * side + j;
      force(3 + idx) += c.torque_scale[j] * u[idx] - c.joint_damping * s.joint_angvel[idx];
    }
  }

  const Eigen::LDLT<MassMatrix> ldlt(mass);
  const Dofs qdd = ldlt.solve(force);
  Dofs qd = pack_qd(s) + h * qdd;
  Dofs q = pack_q(s) + h * qd;

  // Joints driven past a limit stop through an inelastic impulse applied via
  // the mass matrix, so the rest of the body receives the reaction instead of
  // the joint velocity simply vanishing.
  std::array<int, kNumJoints> active{};
  int n_active = 0;
  for (int idx = 0; idx < kNumJoints; ++idx) {
    const JointLimit& lim = c.joint_limits[idx % 3];
    const double angle = q(3 + idx);
    if ((angle < lim.lower && qd(3 + idx) < 0.0) || (angle > lim.upper && qd(3 + idx) > 0.0))
      active[n_active++] = 3 + idx;
  }
  if (n_active > 0) {
    Eigen::Matrix<double, kNumDofs, Eigen::Dynamic> basis =
        Eigen::Matrix<double, kNumDofs, Eigen::Dynamic>::Zero(kNumDofs, n_active);
    Eigen::VectorXd rel(n_active);
    for (int k = 0; k < n_active; ++k) {
      basis(active[k], k) = 1.0;
      rel(k) = qd(active[k]);
    }
    const Eigen::Matrix<double, kNumDofs, Eigen::Dynamic> response = ldlt.solve(basis);
    const Eigen::MatrixXd effective = basis.transpose() * response;
    const Eigen::VectorXd impulse = effective.ldlt().solve(-rel);
    qd += response * impulse;
    for (int k = 0; k < n_active; ++k) qd(active[k]) = 0.0;
  }
  for (int idx = 0; idx < kNumJoints; ++idx) {
    const JointLimit& lim = c.joint_limits[idx % 3];
    q(3 + idx) = std::clamp(q(3 + idx), lim.lower, lim.upper);
  }
  unpack(q, qd, s);
}

}  // namespace detail

/// Upright, motionless biped standing with both ankles at ground level.
inline SimState rest_state(const EnvConfig& config) {
  SimState s;
  s.pelvis_pos = {0.0, config.standing_height()};
  return s;
}

inline SimState reset(const EnvConfig& config, std::uint64_t seed) {
  config.validate();
  SimState s = rest_state(config);
  SplitMix64 rng(seed);
  for (int j = 0; j < kNumJoints; ++j) {
    const JointLimit& lim = config.joint_limits[j % 3];
    s.joint_angle[j] = std::clamp(rng.uniform(-config.reset_noise, config.reset_noise), lim.lower, lim.upper);
  }
  s.rng_state = rng.state();
  return s;
}

inline Action clamp_action(const Action& a) {
  Action out;
  for (int j = 0; j < kNumJoints; ++j) out.torque[j] = std::clamp(a.torque[j], -1.0, 1.0);
  return out;
}

inline bool fallen(const SimState& s, const EnvConfig& config) {
  return s.pelvis_pos.y() < config.fall_height_threshold ||
         std::abs(s.pelvis_rot) > config.fall_tilt_threshold;
}

/// Advances one physics step of `config.dt`. Deterministic; no noise is drawn.
inline StepResult step(const SimState& state, const Action& action, const EnvConfig& config) {
  if (!detail::all_finite(state))
    throw IntegrationError("non-finite input state: " + detail::describe(state));
  for (double t : action.torque)
    if (!std::isfinite(t)) throw IntegrationError("non-finite action component");

  const Action u = clamp_action(action);
  StepResult r;
  r.state = state;
  const double h = config.dt / config.substeps;
  for (int i = 0; i < config.substeps; ++i) detail::substep(r.state, u.torque, config, h);
  r.state.step_index = state.step_index + 1;

  if (!detail::all_finite(r.state))
    throw IntegrationError("integration diverged from state: " + detail::describe(state));

  double effort = 0.0;
  for (double t : u.torque) effort += t * t;
  r.progress = r.state.pelvis_pos.x() - state.pelvis_pos.x();
  r.effort = config.effort_cost_coeff * effort * config.dt;
  r.reward = r.progress - r.effort;
  r.done = fallen(r.state, config) || r.state.step_index >= config.max_steps;
  return r;
}

/// Forward kinematics. The foot keypoint is the ankle.
inline KeypointSet keypoints(const SimState& s, const EnvConfig& config) {
  KeypointSet k;
  k.pelvis = s.pelvis_pos;
  for (int side = 0; side < 2; ++side) {
    const detail::LegAngles a = detail::leg_angles(s, side);
    const Vec2 knee = s.pelvis_pos + config.thigh_length * detail::limb_dir(a.phi[0]);
    const Vec2 foot = knee + config.shank_length * detail::limb_dir(a.phi[1]);
    (side == 0 ? k.r_knee : k.l_knee) = knee;
    (side == 0 ? k.r_foot : k.l_foot) = foot;
  }
  return k;
}

/// Heel and toe positions of both feet, in world frame (right heel, right toe,
/// left heel, left toe).
inline std::array<Vec2, 4> contact_positions(const SimState& s, const EnvConfig& config) {
  std::array<Vec2, 4> out;
  const auto pts = detail::contact_points(config);
  for (int side = 0; side < 2; ++side) {
    const detail::LegAngles a = detail::leg_angles(s, side);
    for (int i = 0; i < 2; ++i) out[2 * side + i] = detail::eval_point(s, a, side, pts[i]).pos;
  }
  return out;
}

template <typename T>
inline void swap_sides(std::array<T, kNumJoints>& v) {
  for (int j = 0; j < 3; ++j) std::swap(v[j], v[j + 3]);
}

inline SimState mirror(const SimState& s) {
  SimState m = s;
  swap_sides(m.joint_angle);
  swap_sides(m.joint_angvel);
  return m;
}

inline Action mirror(const Action& a) {
  Action m = a;
  swap_sides(m.torque);
  return m;
}

inline KeypointSet mirror(const KeypointSet& k) {
  KeypointSet m = k;
  std::swap(m.r_knee, m.l_knee);
  std::swap(m.r_foot, m.l_foot);
  return m;
}

inline std::pair<SimState, Action> mirror(const SimState& s, const Action& a) {
  return {mirror(s), mirror(a)};
}

/// Writes one CSV row per physics step.
class TrajectoryLogger {
 public:
  explicit TrajectoryLogger(std::ostream& os) : os_(os) {
    os_ << "step_index,pelvis_x,pelvis_y,pelvis_rot";
    for (const char* n : {"r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle"})
      os_ << ",angle_" << n;
    for (const char* n : {"r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle"})
      os_ << ",torque_" << n;
    os_ << ",reward,done\n";
    os_ << std::setprecision(9);
  }

  void log(const SimState& s, const Action& applied, double reward, bool done) {
    const Action u = clamp_action(applied);
    os_ << s.step_index << ',' << s.pelvis_pos.x() << ',' << s.pelvis_pos.y() << ','
        << s.pelvis_rot;
    for (double v : s.joint_angle) os_ << ',' << v;
    for (double v : u.torque) os_ << ',' << v;
    os_ << ',' << reward << ',' << (done ? 1 : 0) << '\n';
  }

 private:
  std::ostream& os_;
};

}  // namespace pbrs
