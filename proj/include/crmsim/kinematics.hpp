#pragma once

#include "crmsim/types.hpp"

namespace crmsim {

// ---------------------------------------------------------------------------
// Quintic rest-to-rest trajectory
// ---------------------------------------------------------------------------

/// Quintic interpolation p0 -> pf with zero velocity and acceleration at both
/// ends. Orientation interpolates along the shortest angular difference.
inline TrajectoryPoint quintic_trajectory(const PlanarPose& p0, const PlanarPose& pf,
                                          double T, double t) {
  if (T <= 0.0) throw DomainError("quintic_trajectory: T must be positive");
  if (t < 0.0 || t > T) throw DomainError("quintic_trajectory: t outside [0, T]");

  const double tau = t / T;
  const double s = tau * tau * tau * (10.0 + tau * (-15.0 + 6.0 * tau));
  const double sd = tau * tau * (30.0 + tau * (-60.0 + 30.0 * tau)) / T;
  const double sdd = tau * (60.0 + tau * (-180.0 + 120.0 * tau)) / (T * T);

  const Vector3d d(pf.x - p0.x, pf.y - p0.y, wrap_pi(pf.phi - p0.phi));
  TrajectoryPoint out;
  out.pose = PlanarPose(p0.x + s * d.x(), p0.y + s * d.y(), p0.phi + s * d.z());
  out.vel = sd * d;
  out.acc = sdd * d;
  return out;
}

// ---------------------------------------------------------------------------
// Planar 3R kinematics
// ---------------------------------------------------------------------------

/// World-frame positions of the three joints and the end-effector.
inline std::array<Vector2d, 4> joint_positions(const RobotModel& robot,
                                               const Vector3d& q) {
  const double psi = robot.base_pose.phi;
  const double a1 = psi + q(0);
  const double a2 = a1 + q(1);
  const double a3 = a2 + q(2);
  std::array<Vector2d, 4> p;
  p[0] = robot.base_pose.position();
  p[1] = p[0] + robot.link_lengths[0] * Vector2d(std::cos(a1), std::sin(a1));
  p[2] = p[1] + robot.link_lengths[1] * Vector2d(std::cos(a2), std::sin(a2));
  p[3] = p[2] + robot.link_lengths[2] * Vector2d(std::cos(a3), std::sin(a3));
  return p;
}

inline PlanarPose forward_kinematics(const RobotModel& robot, const Vector3d& q) {
  const auto p = joint_positions(robot, q);
  return PlanarPose(p[3].x(), p[3].y(),
                    robot.base_pose.phi + q(0) + q(1) + q(2));
}

/// Analytic Jacobian mapping qdot to (xd, yd, omega). Third row is (1,1,1).
inline Matrix3d jacobian(const RobotModel& robot, const Vector3d& q) {
  const auto p = joint_positions(robot, q);
  Matrix3d J;
  for (int k = 0; k < 3; ++k) {
    const Vector2d col = perp(p[3] - p[k]);
    J(0, k) = col.x();
    J(1, k) = col.y();
    J(2, k) = 1.0;
  }
  return J;
}

/// Time derivative of the Jacobian. Column k of the translational part is
/// perp(v_ee - v_joint_k).
inline Matrix3d jacobian_dot(const RobotModel& robot, const Vector3d& q,
                             const Vector3d& qd) {
  const auto p = joint_positions(robot, q);
  // v of point attached after joint k: sum of perp(p - p_j) * qd_j for j <= k.
  std::array<Vector2d, 4> v;
  v[0] = Vector2d::Zero();
  for (int k = 1; k <= 3; ++k) {
    v[k] = Vector2d::Zero();
    for (int j = 0; j < k; ++j) v[k] += qd(j) * perp(p[k] - p[j]);
  }
  Matrix3d Jd = Matrix3d::Zero();
  for (int k = 0; k < 3; ++k) {
    const Vector2d col = perp(v[3] - v[k]);
    Jd(0, k) = col.x();
    Jd(1, k) = col.y();
  }
  return Jd;
}

inline double smallest_singular_value(const Matrix3d& J) {
  return J.jacobiSvd().singularValues().minCoeff();
}

constexpr double kSingularSigmaMin = 1e-4;

/// Closed-form 3R IK by wrist-point reduction. The branch selects the elbow
/// sign: ElbowUp has q2 >= 0.
inline Vector3d inverse_kinematics(const RobotModel& robot, const PlanarPose& target,
                                   IkBranch branch) {
  const double L1 = robot.link_lengths[0];
  const double L2 = robot.link_lengths[1];
  const double L3 = robot.link_lengths[2];
  const double psi = robot.base_pose.phi;

  const Vector2d wrist_world =
      target.position() - L3 * Vector2d(std::cos(target.phi), std::sin(target.phi));
  const Vector2d w = rot2(-psi) * (wrist_world - robot.base_pose.position());
  const double r2 = w.squaredNorm();
  const double r = std::sqrt(r2);

  const double r_max = L1 + L2;
  const double r_min = std::abs(L1 - L2);
  if (r > r_max + 1e-12) throw NoSolutionError(r - r_max);
  if (r < r_min - 1e-12) throw NoSolutionError(r_min - r);

  double c2 = (r2 - L1 * L1 - L2 * L2) / (2.0 * L1 * L2);
  c2 = std::clamp(c2, -1.0, 1.0);
  const double q2_mag = std::acos(c2);
  const double q2 = (branch == IkBranch::ElbowUp) ? q2_mag : -q2_mag;
  const double q1 =
      std::atan2(w.y(), w.x()) - std::atan2(L2 * std::sin(q2), L1 + L2 * std::cos(q2));
  const double q3 = (target.phi - psi) - q1 - q2;
  return Vector3d(wrap_pi(q1), wrap_pi(q2), wrap_pi(q3));
}

// ---------------------------------------------------------------------------
// Load-frame references
// ---------------------------------------------------------------------------

/// Maps a load-frame reference to the end-effector reference for the grasp
/// offset r_i (load frame). Planar specialization of
///   P_i = P_o - R(theta) r_i,  phi_ei = theta_o,
/// with the cross-product terms from differentiating R(theta) r_i.
inline TrajectoryPoint load_to_ee_reference(const TrajectoryPoint& load_ref,
                                            const Vector2d& r_i) {
  const double theta = load_ref.pose.phi;
  const double omega = load_ref.vel.z();
  const double omegad = load_ref.acc.z();
  const Vector2d rw = rot2(theta) * r_i;

  TrajectoryPoint ee;
  const Vector2d p = load_ref.pose.position() - rw;
  ee.pose = PlanarPose(p.x(), p.y(), theta);
  const Vector2d v = load_ref.vel.head<2>() - omega * perp(rw);
  ee.vel << v, omega;
  const Vector2d a = load_ref.acc.head<2>() - omegad * perp(rw) + omega * omega * rw;
  ee.acc << a, omegad;
  return ee;
}

struct JointReference {
  Vector3d q, qd, qdd;
};

/// Joint-space reference from an end-effector reference:
/// q from IK, qd = J^-1 v, qdd = J^-1 (a - Jdot qd).
inline JointReference joint_reference(const RobotModel& robot,
                                      const TrajectoryPoint& ee_ref, IkBranch branch) {
  JointReference out;
  out.q = inverse_kinematics(robot, ee_ref.pose, branch);
  const Matrix3d J = jacobian(robot, out.q);
  const double smin = smallest_singular_value(J);
  if (smin < kSingularSigmaMin) {
    const double smax = J.jacobiSvd().singularValues().maxCoeff();
    throw SingularJacobianError(smax / std::max(smin, 1e-300));
  }
  const Eigen::PartialPivLU<Matrix3d> lu(J);
  out.qd = lu.solve(ee_ref.vel);
  out.qdd = lu.solve(ee_ref.acc - jacobian_dot(robot, out.q, out.qd) * out.qd);
  return out;
}

// ---------------------------------------------------------------------------
// Closed-chain residuals
// ---------------------------------------------------------------------------

/// Pairwise rigid-grasp residual from the two end-effector poses:
/// translational (P_1 + R(phi_1) r_1) - (P_2 + R(phi_2) r_2), rotational
/// phi_1 - phi_2 - deltaR (wrapped).
inline Vector3d grasp_residual(const PlanarPose& ee1, const Vector2d& r1,
                               const PlanarPose& ee2, const Vector2d& r2,
                               double delta_R) {
  Vector3d res;
  res.head<2>() = (ee1.position() + rot2(ee1.phi) * r1) -
                  (ee2.position() + rot2(ee2.phi) * r2);
  res(2) = wrap_pi(ee1.phi - ee2.phi - delta_R);
  return res;
}

inline Vector3d constraint_residual(const RobotModel& robot1, const Vector3d& q1,
                                    const RobotModel& robot2, const Vector3d& q2,
                                    const GraspGeometry& geom) {
  return grasp_residual(forward_kinematics(robot1, q1), geom.r.at(0),
                        forward_kinematics(robot2, q2), geom.r.at(1),
                        geom.delta_R.empty() ? 0.0 : geom.delta_R[0]);
}

/// All N(N-1)/2 pairwise residual blocks, stacked in (i, i') row-major order.
inline VectorXd constraint_residual_all(const std::vector<RobotModel>& robots,
                                        const std::vector<Vector3d>& q,
                                        const GraspGeometry& geom) {
  const int n = geom.robots();
  VectorXd out(3 * n * (n - 1) / 2);
  std::vector<PlanarPose> ee(n);
  for (int i = 0; i < n; ++i) ee[i] = forward_kinematics(robots[i], q[i]);
  int row = 0, pair = 0;
  for (int i = 0; i < n; ++i) {
    for (int k = i + 1; k < n; ++k, ++pair) {
      const double dR = pair < static_cast<int>(geom.delta_R.size()) ? geom.delta_R[pair] : 0.0;
      out.segment<3>(row) = grasp_residual(ee[i], geom.r[i], ee[k], geom.r[k], dR);
      row += 3;
    }
  }
  return out;
}

}  // namespace crmsim
