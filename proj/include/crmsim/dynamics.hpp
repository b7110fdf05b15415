#pragma once

#include "crmsim/kinematics.hpp"

namespace crmsim {

// ---------------------------------------------------------------------------
// Rigid-body matrices of one planar 3R arm
// ---------------------------------------------------------------------------

struct RigidBodyTerms {
  Matrix3d D;  // inertia
  Matrix3d C;  // Coriolis/centripetal (Christoffel form)
  Vector3d g;  // gravity torques
};

/// Closed-form D, C, g for a planar 3R arm. C is assembled from Christoffel
/// symbols, so Ddot - 2C is skew-symmetric. The base orientation enters only
/// through gravity.
inline RigidBodyTerms rigid_body_matrices(const RobotModel& robot, const Vector3d& q,
                                          const Vector3d& qd,
                                          const Vector2d& gravity = Vector2d(0.0, -9.81)) {
  const double L1 = robot.link_lengths[0], L2 = robot.link_lengths[1];
  const double l1 = robot.link_com_offsets[0], l2 = robot.link_com_offsets[1],
               l3 = robot.link_com_offsets[2];
  const double m1 = robot.link_masses[0], m2 = robot.link_masses[1],
               m3 = robot.link_masses[2];
  const double I1 = robot.link_inertias[0], I2 = robot.link_inertias[1],
               I3 = robot.link_inertias[2];

  const double c2 = std::cos(q(1)), s2 = std::sin(q(1));
  const double c3 = std::cos(q(2)), s3 = std::sin(q(2));
  const double c23 = std::cos(q(1) + q(2)), s23 = std::sin(q(1) + q(2));

  // Coupling coefficients of the configuration-dependent inertia terms.
  const double k2 = m2 * L1 * l2 + m3 * L1 * L2;  // multiplies cos q2
  const double k3 = m3 * L2 * l3;                 // multiplies cos q3
  const double k23 = m3 * L1 * l3;                // multiplies cos(q2+q3)

  RigidBodyTerms out;
  Matrix3d& D = out.D;
  D(0, 0) = I1 + I2 + I3 + m1 * l1 * l1 + m2 * (L1 * L1 + l2 * l2) +
            m3 * (L1 * L1 + L2 * L2 + l3 * l3) + 2.0 * k2 * c2 + 2.0 * k3 * c3 +
            2.0 * k23 * c23;
  D(0, 1) = I2 + I3 + m2 * l2 * l2 + m3 * (L2 * L2 + l3 * l3) + k2 * c2 +
            2.0 * k3 * c3 + k23 * c23;
  D(0, 2) = I3 + m3 * l3 * l3 + k3 * c3 + k23 * c23;
  D(1, 1) = I2 + I3 + m2 * l2 * l2 + m3 * (L2 * L2 + l3 * l3) + 2.0 * k3 * c3;
  D(1, 2) = I3 + m3 * l3 * l3 + k3 * c3;
  D(2, 2) = I3 + m3 * l3 * l3;
  D(1, 0) = D(0, 1);
  D(2, 0) = D(0, 2);
  D(2, 1) = D(1, 2);

  // Partial derivatives dD/dq2 and dD/dq3 (dD/dq1 = 0).
  const double h2 = -k2 * s2, h3 = -k3 * s3, h23 = -k23 * s23;
  Matrix3d dD2 = Matrix3d::Zero(), dD3 = Matrix3d::Zero();
  dD2(0, 0) = 2.0 * h2 + 2.0 * h23;
  dD2(0, 1) = dD2(1, 0) = h2 + h23;
  dD2(0, 2) = dD2(2, 0) = h23;
  dD3(0, 0) = 2.0 * h3 + 2.0 * h23;
  dD3(0, 1) = dD3(1, 0) = 2.0 * h3 + h23;
  dD3(0, 2) = dD3(2, 0) = h3 + h23;
  dD3(1, 1) = 2.0 * h3;
  dD3(1, 2) = dD3(2, 1) = h3;

  const std::array<const Matrix3d*, 3> dD{nullptr, &dD2, &dD3};
  Matrix3d& C = out.C;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double cij = 0.0;
      for (int k = 0; k < 3; ++k) {
        double dij_k = (k > 0) ? (*dD[k])(i, j) : 0.0;
        double dik_j = (j > 0) ? (*dD[j])(i, k) : 0.0;
        double djk_i = (i > 0) ? (*dD[i])(j, k) : 0.0;
        cij += 0.5 * (dij_k + dik_j - djk_i) * qd(k);
      }
      C(i, j) = cij;
    }
  }

  // g_k = -sum_j m_j grav . d p_comj / d q_k, with d p / d q_k = perp(p - p_k).
  const auto pj = joint_positions(robot, q);
  const double psi = robot.base_pose.phi;
  const double a1 = psi + q(0), a12 = a1 + q(1), a123 = a12 + q(2);
  std::array<Vector2d, 3> com;
  com[0] = pj[0] + l1 * Vector2d(std::cos(a1), std::sin(a1));
  com[1] = pj[1] + l2 * Vector2d(std::cos(a12), std::sin(a12));
  com[2] = pj[2] + l3 * Vector2d(std::cos(a123), std::sin(a123));
  const std::array<double, 3> masses{m1, m2, m3};
  for (int k = 0; k < 3; ++k) {
    double gk = 0.0;
    for (int j = k; j < 3; ++j)
      gk -= masses[j] * gravity.dot(perp(com[j] - pj[k]));
    out.g(k) = gk;
  }
  return out;
}

/// Potential + kinetic energy of the arm links (no actuator terms).
inline double link_mechanical_energy(const RobotModel& robot, const Vector3d& q,
                                     const Vector3d& qd, const Vector2d& gravity) {
  const RigidBodyTerms rb = rigid_body_matrices(robot, q, qd, gravity);
  const auto pj = joint_positions(robot, q);
  const double psi = robot.base_pose.phi;
  const double a1 = psi + q(0), a12 = a1 + q(1), a123 = a12 + q(2);
  std::array<Vector2d, 3> com;
  com[0] = pj[0] + robot.link_com_offsets[0] * Vector2d(std::cos(a1), std::sin(a1));
  com[1] = pj[1] + robot.link_com_offsets[1] * Vector2d(std::cos(a12), std::sin(a12));
  com[2] = pj[2] + robot.link_com_offsets[2] * Vector2d(std::cos(a123), std::sin(a123));
  double V = 0.0;
  for (int j = 0; j < 3; ++j) V -= robot.link_masses[j] * gravity.dot(com[j]);
  return 0.5 * qd.dot(rb.D * qd) + V;
}

// ---------------------------------------------------------------------------
// Actuator augmentation
// ---------------------------------------------------------------------------

struct Augmentation {
  Vector3d dD;  // J_rot * n^2 added to D diagonal
  Vector3d dC;  // b * n^2 + a^2 / R added to C diagonal
};

inline Augmentation augment(const RobotModel& robot) {
  Augmentation out;
  for (int j = 0; j < 3; ++j) {
    const ActuatorParams& act = robot.actuators[j];
    out.dD(j) = act.rotor_inertia * act.gear_ratio * act.gear_ratio;
    out.dC(j) = act.viscous_friction * act.gear_ratio * act.gear_ratio +
                act.electrical_damping();
  }
  return out;
}

/// D, C, g of the augmented robot-actuator model.
inline RigidBodyTerms augmented_matrices(const RobotModel& robot, const Vector3d& q,
                                         const Vector3d& qd, const Vector2d& gravity) {
  RigidBodyTerms rb = rigid_body_matrices(robot, q, qd, gravity);
  const Augmentation aug = augment(robot);
  rb.D.diagonal() += aug.dD;
  rb.C.diagonal() += aug.dC;
  return rb;
}

// ---------------------------------------------------------------------------
// Load dynamics
// ---------------------------------------------------------------------------

/// Planar load: F_o is the net wrench applied at the CM (gravity excluded).
inline Vector3d load_dynamics(const LoadModel& load, const Vector3d& /*load_vel*/,
                              const Vector3d& F_o) {
  Vector3d acc;
  acc.head<2>() = F_o.head<2>() / load.mass + load.gravity;
  acc(2) = F_o(2) / load.inertia;  // scalar inertia: no gyroscopic term
  return acc;
}

struct SpatialLoadAcc {
  Vector3d linear;
  Vector3d angular;
};

/// Full 6-DOF rigid body: linear part plus Euler equations with the
/// gyroscopic term omega x (I omega).
inline SpatialLoadAcc load_dynamics_spatial(double mass, const Matrix3d& inertia,
                                            const Vector3d& gravity, const Vector3d& omega,
                                            const Eigen::Matrix<double, 6, 1>& F_o) {
  SpatialLoadAcc acc;
  acc.linear = F_o.head<3>() / mass + gravity;
  acc.angular = inertia.ldlt().solve(F_o.tail<3>() - omega.cross(inertia * omega));
  return acc;
}

}  // namespace crmsim
