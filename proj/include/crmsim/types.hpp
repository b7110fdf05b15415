#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace crmsim {

using Eigen::Matrix2d;
using Eigen::Matrix3d;
using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::Vector3d;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Target outside the reachable workspace. Carries how far the wrist point
/// lies outside the annulus of reachable radii.
struct NoSolutionError : DomainError {
  double excess;  // meters outside the reachable interval
  explicit NoSolutionError(double excess_)
      : DomainError("inverse kinematics: target unreachable, excess " +
                    std::to_string(excess_) + " m"),
        excess(excess_) {}
};

struct SingularJacobianError : DomainError {
  double condition_number;
  explicit SingularJacobianError(double cond)
      : DomainError("Jacobian near-singular, condition number " +
                    std::to_string(cond)),
        condition_number(cond) {}
};

struct DegenerateGraspError : DomainError {
  using DomainError::DomainError;
};

struct InvalidGainsError : DomainError {
  using DomainError::DomainError;
};

struct StorageDepletedError : DomainError {
  using DomainError::DomainError;
};

struct IntegrationDivergedError : DomainError {
  double t;  // simulation time at which non-finite values appeared
  explicit IntegrationDivergedError(double t_)
      : DomainError("integration diverged at t = " + std::to_string(t_) + " s"),
        t(t_) {}
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Small planar helpers
// ---------------------------------------------------------------------------

/// Wrap angle to (-pi, pi].
inline double wrap_pi(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a <= 0.0) a += 2.0 * M_PI;
  return a - M_PI;
}

/// 90-degree counterclockwise rotation: perp(v) = (-v.y, v.x).
/// For planar vectors this plays the role of S(z_hat) v.
inline Vector2d perp(const Vector2d& v) { return Vector2d(-v.y(), v.x()); }

inline Matrix2d rot2(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Matrix2d R;
  R << c, -s, s, c;
  return R;
}

/// 3x3 cross-product matrix, S(v) w = v x w.
inline Matrix3d skew(const Vector3d& v) {
  Matrix3d S;
  S << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return S;
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// World-frame end-effector (or load) pose; phi normalized to (-pi, pi].
struct PlanarPose {
  double x = 0.0;
  double y = 0.0;
  double phi = 0.0;

  PlanarPose() = default;
  PlanarPose(double x_, double y_, double phi_) : x(x_), y(y_), phi(wrap_pi(phi_)) {}

  Vector2d position() const { return Vector2d(x, y); }
  Vector3d vec() const { return Vector3d(x, y, phi); }
};

/// Pose plus first and second world-frame derivatives (xd, yd, omega).
struct TrajectoryPoint {
  PlanarPose pose;
  Vector3d vel = Vector3d::Zero();
  Vector3d acc = Vector3d::Zero();
};

/// Rigid-grasp geometry shared by all robots of a scenario. r[i] points from
/// grasp frame i to the load's center of mass, expressed in the load frame.
struct GraspGeometry {
  std::vector<Vector2d> r;               // per-robot grasp offsets, load frame
  std::vector<Vector2d> base_positions;  // world-frame robot base origins
  std::vector<double> delta_R;           // relative EE orientation offsets,
                                         // one per robot pair (i < i'), row-major
  int robots() const { return static_cast<int>(r.size()); }
};

struct ActuatorParams {
  double gear_ratio = 50.0;        // n_bar
  double motor_constant = 0.07;    // alpha, N*m/A
  double resistance = 0.4;         // ohms
  double rotor_inertia = 0.0;      // kg*m^2, reflected through n_bar^2
  double viscous_friction = 0.0;   // N*m*s/rad, reflected through n_bar^2

  double a() const { return motor_constant * gear_ratio; }
  /// Electrical damping added to the joint by the shorted armature path.
  double electrical_damping() const { return a() * a() / resistance; }
  /// Torque ceiling at supply voltage Vs: |U| <= Vs * a / R.
  double torque_ceiling(double vs) const { return vs * a() / resistance; }
};

/// Planar 3R arm plus one actuator per joint.
struct RobotModel {
  std::array<double, 3> link_lengths{0.425, 0.39, 0.13};
  std::array<double, 3> link_masses{8.05, 2.84, 1.37};
  std::array<double, 3> link_com_offsets{0.2125, 0.195, 0.065};  // from proximal joint
  std::array<double, 3> link_inertias{0.0, 0.0, 0.0};            // about COM
  PlanarPose base_pose;
  std::array<ActuatorParams, 3> actuators{};

  double reach() const { return link_lengths[0] + link_lengths[1] + link_lengths[2]; }

  /// Uniform slender-rod closure: COM at mid-length, I = m L^2 / 12.
  void close_inertias_as_rods() {
    for (int j = 0; j < 3; ++j) {
      link_com_offsets[j] = 0.5 * link_lengths[j];
      link_inertias[j] = link_masses[j] * link_lengths[j] * link_lengths[j] / 12.0;
    }
  }
};

/// Rigid payload. Planar scalar inertia; spatial load dynamics take a 3x3
/// inertia separately.
struct LoadModel {
  double mass = 5.0;
  double inertia = 5.0 * 0.5 * 0.5 / 12.0;  // rod default, m L^2 / 12
  GraspGeometry grasp;
  Vector2d gravity{0.0, -9.81};
};

enum class IkBranch { ElbowUp, ElbowDown };

}  // namespace crmsim
