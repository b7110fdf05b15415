#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "crmsim/dynamics.hpp"

using namespace crmsim;

namespace {

RobotModel table_robot() {
  RobotModel r;
  r.close_inertias_as_rods();
  return r;
}

/// Directional derivative of D along qd by Richardson-extrapolated central
/// differences (O(h^4) truncation).
Matrix3d d_dt_inertia(const RobotModel& r, const Vector3d& q, const Vector3d& qd,
                      double h = 1e-4) {
  auto D = [&](double s) {
    return rigid_body_matrices(r, q + s * qd, qd).D;
  };
  const Matrix3d d1 = (D(h) - D(-h)) / (2.0 * h);
  const Matrix3d d2 = (D(0.5 * h) - D(-0.5 * h)) / h;
  return (4.0 * d2 - d1) / 3.0;
}

}  // namespace

TEST_CASE("inertia matrix is symmetric positive definite") {
  const RobotModel r = table_robot();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ang(-M_PI, M_PI);
  for (int k = 0; k < 200; ++k) {
    const Vector3d q(ang(rng), ang(rng), ang(rng));
    const Matrix3d D = rigid_body_matrices(r, q, Vector3d::Zero()).D;
    CHECK((D - D.transpose()).norm() < 1e-14);
    CHECK(D.selfadjointView<Eigen::Lower>().eigenvalues().minCoeff() > 0.0);
  }
}

TEST_CASE("Ddot minus 2C is skew-symmetric") {
  const RobotModel r = table_robot();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ang(-M_PI, M_PI);
  std::uniform_real_distribution<double> vel(-3.0, 3.0);
  for (int k = 0; k < 1000; ++k) {
    const Vector3d q(ang(rng), ang(rng), ang(rng));
    const Vector3d qd(vel(rng), vel(rng), vel(rng));
    const Matrix3d C = rigid_body_matrices(r, q, qd).C;
    const Matrix3d N = d_dt_inertia(r, q, qd) - 2.0 * C;
    CHECK(std::abs(qd.dot(N * qd)) < 1e-10);
    CHECK((N + N.transpose()).norm() < 1e-9);
  }
}

TEST_CASE("gravity torques are the potential gradient") {
  const RobotModel r = table_robot();
  const Vector2d grav(0.0, -9.81);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> ang(-M_PI, M_PI);
  const double h = 1e-6;
  auto V = [&](const Vector3d& q) {
    return link_mechanical_energy(r, q, Vector3d::Zero(), grav);
  };
  for (int k = 0; k < 100; ++k) {
    const Vector3d q(ang(rng), ang(rng), ang(rng));
    const Vector3d g = rigid_body_matrices(r, q, Vector3d::Zero(), grav).g;
    for (int j = 0; j < 3; ++j) {
      Vector3d qp = q, qm = q;
      qp(j) += h;
      qm(j) -= h;
      CHECK(g(j) == Catch::Approx((V(qp) - V(qm)) / (2.0 * h)).margin(1e-5));
    }
  }
}

TEST_CASE("unconstrained power balance") {
  // d/dt (0.5 qd' D qd + V) = qd' tau for the open-chain arm.
  const RobotModel r = table_robot();
  const Vector2d grav(0.0, -9.81);
  Vector3d q(0.3, -0.8, 0.4), qd(0.5, -0.2, 1.0);
  const Vector3d tau(2.0, -1.0, 0.5);
  const double dt = 1e-5;
  double work = 0.0;
  const double e0 = link_mechanical_energy(r, q, qd, grav);
  for (int k = 0; k < 2000; ++k) {
    auto deriv = [&](const Vector3d& q_, const Vector3d& qd_, Vector3d& dq,
                     Vector3d& dqd) {
      const RigidBodyTerms rb = rigid_body_matrices(r, q_, qd_, grav);
      dq = qd_;
      dqd = rb.D.ldlt().solve(tau - rb.C * qd_ - rb.g);
    };
    Vector3d a1, b1, a2, b2, a3, b3, a4, b4;
    deriv(q, qd, a1, b1);
    deriv(q + 0.5 * dt * a1, qd + 0.5 * dt * b1, a2, b2);
    deriv(q + 0.5 * dt * a2, qd + 0.5 * dt * b2, a3, b3);
    deriv(q + dt * a3, qd + dt * b3, a4, b4);
    const Vector3d qd_next = qd + dt / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4);
    work += 0.5 * dt * tau.dot(qd + qd_next);  // trapezoid on qd' tau
    q += dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4);
    qd = qd_next;
  }
  const double e1 = link_mechanical_energy(r, q, qd, grav);
  CHECK(e1 - e0 == Catch::Approx(work).margin(1e-6));
}

TEST_CASE("actuator augmentation constants") {
  RobotModel r = table_robot();
  for (auto& a : r.actuators) {
    a.rotor_inertia = 2e-4;
    a.viscous_friction = 1e-3;
  }
  const ActuatorParams& act = r.actuators[0];
  CHECK(act.a() == Catch::Approx(3.5));
  CHECK(act.electrical_damping() == Catch::Approx(30.625));
  CHECK(act.torque_ceiling(48.0) == Catch::Approx(420.0));

  const Augmentation aug = augment(r);
  CHECK(aug.dD(0) == Catch::Approx(2e-4 * 2500.0));
  CHECK(aug.dC(0) == Catch::Approx(1e-3 * 2500.0 + 30.625));

  const Vector3d q(0.1, 0.2, 0.3), qd(1.0, -1.0, 0.5);
  const RigidBodyTerms bare = rigid_body_matrices(r, q, qd);
  const RigidBodyTerms full = augmented_matrices(r, q, qd, Vector2d(0, -9.81));
  CHECK((full.D - bare.D).diagonal().isApprox(aug.dD, 1e-14));
  CHECK((full.C - bare.C).diagonal().isApprox(aug.dC, 1e-14));
}

TEST_CASE("planar load dynamics") {
  LoadModel load;
  const Vector3d acc = load_dynamics(load, Vector3d::Zero(), Vector3d(10.0, 0.0, 0.5));
  CHECK(acc(0) == Catch::Approx(2.0));
  CHECK(acc(1) == Catch::Approx(-9.81));
  CHECK(acc(2) == Catch::Approx(0.5 / load.inertia));
}

TEST_CASE("spatial load dynamics conserve energy under zero wrench") {
  Matrix3d I = Matrix3d::Zero();
  I.diagonal() << 0.1, 0.25, 0.3;
  Vector3d omega(1.2, -0.7, 2.0);
  const Vector3d L0 = I * omega;
  const double T0 = 0.5 * omega.dot(I * omega);
  const double dt = 1e-4;
  Eigen::Matrix<double, 6, 1> zero6 = Eigen::Matrix<double, 6, 1>::Zero();
  for (int k = 0; k < 20000; ++k) {
    auto f = [&](const Vector3d& w) {
      return load_dynamics_spatial(1.0, I, Vector3d::Zero(), w, zero6).angular;
    };
    const Vector3d k1 = f(omega);
    const Vector3d k2 = f(omega + 0.5 * dt * k1);
    const Vector3d k3 = f(omega + 0.5 * dt * k2);
    const Vector3d k4 = f(omega + dt * k3);
    omega += dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  CHECK(0.5 * omega.dot(I * omega) == Catch::Approx(T0).margin(1e-9));
  CHECK((I * omega).norm() == Catch::Approx(L0.norm()).margin(1e-9));
}
