#pragma once

#include "crmsim/control.hpp"
#include "crmsim/dynamics.hpp"
#include "crmsim/energy.hpp"
#include "crmsim/grasp.hpp"
#include "crmsim/kinematics.hpp"

namespace crmsim {

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

struct TrajectorySpec {
  PlanarPose p0;
  PlanarPose pf;
  double T = 1.0;
};

enum class StorageMode { Constant, Ultracap };

struct SimParams {
  double dt = 1e-4;
  StorageMode storage_mode = StorageMode::Constant;
  double vs0 = 48.0;          // volts
  double capacitance = 10.0;  // farads, ultracap mode only
  double eps_f = 0.005;       // IS-set radius, meters
  double baumgarte_alpha = 20.0;
  double baumgarte_beta = 20.0;
  double saturation_duty_tol = 0.01;
  double drift_tol = 1e-6;
};

struct Scenario {
  std::vector<RobotModel> robots;
  LoadModel load;
  ImpedanceGains gains;
  TrajectorySpec traj;
  SimParams sim;
  std::vector<IkBranch> branches;
  std::uint64_t seed = 1;

  int n_robots() const { return static_cast<int>(robots.size()); }
  int joints() const { return 3 * n_robots(); }
};

// ---------------------------------------------------------------------------
// State
// ---------------------------------------------------------------------------

/// Stacked joint and load states plus the controller filter states. Flattened
/// as [q, qd, load_q, load_v, x1, x2] for the integrator.
struct SystemState {
  VectorXd q;        // 3N
  VectorXd qd;       // 3N
  Vector3d load_q;   // (x, y, theta)
  Vector3d load_v;   // (xd, yd, omega)
  VectorXd fx1;      // filter positions, 3N
  VectorXd fx2;      // filter velocities, 3N
  double t = 0.0;
  double vs = 48.0;

  PlanarPose load_pose() const { return PlanarPose(load_q.x(), load_q.y(), load_q.z()); }

  VectorXd flatten() const {
    VectorXd y(4 * q.size() + 6);
    y << q, qd, load_q, load_v, fx1, fx2;
    return y;
  }
  void unflatten(const VectorXd& y) {
    const int n = static_cast<int>(q.size());
    q = y.segment(0, n);
    qd = y.segment(n, n);
    load_q = y.segment<3>(2 * n);
    load_v = y.segment<3>(2 * n + 3);
    fx1 = y.segment(2 * n + 6, n);
    fx2 = y.segment(3 * n + 6, n);
  }
};

/// Per-robot end-effector wrench (fx, fy, mz), world frame, applied by the
/// object on the end-effector.
struct WrenchSet {
  std::vector<Vector3d> F;

  VectorXd stacked() const {
    VectorXd f(3 * F.size());
    for (size_t i = 0; i < F.size(); ++i) f.segment<3>(3 * i) = F[i];
    return f;
  }
};

/// Everything the derivative evaluation produces besides the state rates.
struct StageOutputs {
  VectorXd tau_v;    // commanded virtual torque, nN
  VectorXd u;        // converter ratios
  VectorXd U;        // applied torques
  VectorXd tau_ext;  // J^T F per robot, stacked
  WrenchSet wrenches;
  VectorXd qdd;
  Vector3d load_acc;
  VectorXd S, zeta;
  VectorXd q_ref, qd_ref;  // joint-space reference at this time
  double residual_norm = 0.0;
  bool any_saturated = false;
};

// ---------------------------------------------------------------------------
// Closed-chain KKT solve
// ---------------------------------------------------------------------------

namespace detail {

/// Per-robot constraint block against the load states:
/// Phi_i = [P_i + R(theta) r_i - P_o; phi_i - theta], so
/// dPhi_i/d(load) = [-I2, perp(r_w); 0, -1].
inline Matrix3d load_constraint_block(const Vector2d& r_world) {
  Matrix3d B = Matrix3d::Zero();
  B(0, 0) = -1.0;
  B(1, 1) = -1.0;
  const Vector2d pr = perp(r_world);
  B(0, 2) = pr.x();
  B(1, 2) = pr.y();
  B(2, 2) = -1.0;
  return B;
}

struct KktProblem {
  int n = 0;  // robots
  std::vector<Matrix3d> D, J, Jdot;
  std::vector<Vector3d> h;         // C qd + g
  std::vector<Vector3d> tau_term;  // rhs torque (tau_v0 or fixed applied torque)
  // Per joint: when true, the applied torque is tau_term (independent of
  // lambda); when false the controller coupling D M_f^-1 J^T lambda applies.
  std::vector<std::array<bool, 3>> torque_fixed;
  std::vector<Vector3d> minv_f;  // 1 / M_f per joint (controller inertia), per robot
  std::vector<Vector2d> r_world;
  std::vector<Vector3d> phi, phi_dot;
  std::vector<Vector3d> acc_bias;  // Jdot qd - omega^2 r_w terms
  double load_mass = 0.0, load_inertia = 0.0;
  Vector2d gravity = Vector2d::Zero();
  double baumgarte_alpha = 0.0, baumgarte_beta = 0.0;
};

struct KktSolution {
  VectorXd qdd;                  // 3N
  Vector3d load_acc;
  std::vector<Vector3d> lambda;  // object-on-robot wrenches
};

inline KktSolution solve_kkt(const KktProblem& p) {
  const int n = p.n;
  const int nq = 3 * n;
  const int dim = 2 * nq + 3;  // accelerations (nq + 3) + multipliers (nq)
  MatrixXd G = MatrixXd::Zero(dim, dim);
  VectorXd rhs = VectorXd::Zero(dim);

  for (int i = 0; i < n; ++i) {
    const int rq = 3 * i;          // robot acceleration rows/cols
    const int cl = nq + 3 + 3 * i; // lambda columns
    G.block<3, 3>(rq, rq) = p.D[i];
    const Matrix3d Jt = p.J[i].transpose();
    const Matrix3d coup =
        p.D[i] * p.minv_f[i].cwiseInverse().asDiagonal() * Jt;  // D M_f^-1 J^T
    for (int j = 0; j < 3; ++j) {
      if (p.torque_fixed[i][j])
        G.block<1, 3>(rq + j, cl) = -Jt.row(j);
      else
        G.block<1, 3>(rq + j, cl) = coup.row(j);
      rhs(rq + j) = p.tau_term[i](j) - p.h[i](j);
    }
  }

  // Load rows.
  const int rl = nq;
  G(rl, rl) = p.load_mass;
  G(rl + 1, rl + 1) = p.load_mass;
  G(rl + 2, rl + 2) = p.load_inertia;
  rhs.segment<2>(rl) = p.load_mass * p.gravity;
  for (int i = 0; i < n; ++i) {
    const Matrix3d B = load_constraint_block(p.r_world[i]);
    G.block<3, 3>(rl, nq + 3 + 3 * i) = -B.transpose();
  }

  // Constraint rows with Baumgarte stabilization.
  for (int i = 0; i < n; ++i) {
    const int rc = nq + 3 + 3 * i;
    G.block<3, 3>(rc, 3 * i) = p.J[i];
    G.block<3, 3>(rc, nq) = load_constraint_block(p.r_world[i]);
    rhs.segment<3>(rc) = -p.acc_bias[i] -
                         2.0 * p.baumgarte_alpha * p.phi_dot[i] -
                         p.baumgarte_beta * p.baumgarte_beta * p.phi[i];
  }

  Eigen::PartialPivLU<MatrixXd> lu(G);
  const VectorXd x = lu.solve(rhs);
  if (!x.allFinite() || (G * x - rhs).norm() > 1e-6 * (1.0 + rhs.norm()))
    throw DomainError("constraint_forces: singular KKT system");

  KktSolution sol;
  sol.qdd = x.segment(0, nq);
  sol.load_acc = x.segment<3>(nq);
  sol.lambda.resize(n);
  for (int i = 0; i < n; ++i) sol.lambda[i] = x.segment<3>(nq + 3 + 3 * i);
  return sol;
}

inline void fill_constraint_terms(const Scenario& sc, const SystemState& st,
                                  KktProblem& p) {
  const int n = sc.n_robots();
  const double theta = st.load_q.z();
  const double omega = st.load_v.z();
  p.r_world.resize(n);
  p.phi.resize(n);
  p.phi_dot.resize(n);
  p.acc_bias.resize(n);
  for (int i = 0; i < n; ++i) {
    const Vector3d qi = st.q.segment<3>(3 * i);
    const Vector3d qdi = st.qd.segment<3>(3 * i);
    const PlanarPose ee = forward_kinematics(sc.robots[i], qi);
    p.r_world[i] = rot2(theta) * sc.load.grasp.r[i];
    p.phi[i].head<2>() = ee.position() + p.r_world[i] - st.load_q.head<2>();
    p.phi[i](2) = wrap_pi(ee.phi - theta);
    p.phi_dot[i] = p.J[i] * qdi + load_constraint_block(p.r_world[i]) * st.load_v;
    p.acc_bias[i] = p.Jdot[i] * qdi;
    p.acc_bias[i].head<2>() -= omega * omega * p.r_world[i];
  }
  p.load_mass = sc.load.mass;
  p.load_inertia = sc.load.inertia;
  p.gravity = sc.load.gravity;
  p.baumgarte_alpha = sc.sim.baumgarte_alpha;
  p.baumgarte_beta = sc.sim.baumgarte_beta;
}

}  // namespace detail

/// Resolves the grasp wrenches for a given state and externally prescribed
/// joint torques by solving the coupled robots+load KKT system with the
/// acceleration-level grasp constraints.
struct ConstraintForceResult {
  WrenchSet wrenches;
  VectorXd qdd;
  Vector3d load_acc;
};

inline ConstraintForceResult constraint_forces(const Scenario& sc, const SystemState& st,
                                               const VectorXd& applied_torque) {
  const int n = sc.n_robots();
  detail::KktProblem p;
  p.n = n;
  p.D.resize(n);
  p.J.resize(n);
  p.Jdot.resize(n);
  p.h.resize(n);
  p.tau_term.resize(n);
  p.torque_fixed.assign(n, {true, true, true});
  p.minv_f.assign(n, Vector3d::Ones());
  for (int i = 0; i < n; ++i) {
    const Vector3d qi = st.q.segment<3>(3 * i);
    const Vector3d qdi = st.qd.segment<3>(3 * i);
    const RigidBodyTerms rb = augmented_matrices(sc.robots[i], qi, qdi, sc.load.gravity);
    p.D[i] = rb.D;
    p.h[i] = rb.C * qdi + rb.g;
    p.J[i] = jacobian(sc.robots[i], qi);
    p.Jdot[i] = jacobian_dot(sc.robots[i], qi, qdi);
    p.tau_term[i] = applied_torque.segment<3>(3 * i);
  }
  detail::fill_constraint_terms(sc, st, p);
  const detail::KktSolution sol = detail::solve_kkt(p);
  ConstraintForceResult out;
  out.wrenches.F = sol.lambda;
  out.qdd = sol.qdd;
  out.load_acc = sol.load_acc;
  return out;
}

// ---------------------------------------------------------------------------
// Controller-in-the-loop derivative evaluation
// ---------------------------------------------------------------------------

/// Evaluates the full closed-loop derivative at (t, state): references,
/// impedance controller, SVC saturation, and the constrained accelerations.
/// The interaction torque T_ext = J^T lambda enters the controller through an
/// algebraic loop; both sides are affine in lambda, so the loop is folded
/// into the KKT solve. Saturated converters are handled by re-solving with
/// the affected joints pinned at their torque ceiling.
inline void eval_closed_loop(const Scenario& sc, const SystemState& st,
                             SystemState& rates, StageOutputs& out) {
  const int n = sc.n_robots();
  const int nq = sc.joints();
  const double t = st.t;

  // Joint-space references from the load trajectory.
  const TrajectoryPoint load_ref = quintic_trajectory(sc.traj.p0, sc.traj.pf, sc.traj.T,
                                                      std::min(t, sc.traj.T));
  VectorXd q_d(nq), qd_d(nq), qdd_d(nq);
  for (int i = 0; i < n; ++i) {
    const TrajectoryPoint ee_ref = load_to_ee_reference(load_ref, sc.load.grasp.r[i]);
    const JointReference jr = joint_reference(sc.robots[i], ee_ref, sc.branches[i]);
    q_d.segment<3>(3 * i) = jr.q;
    qd_d.segment<3>(3 * i) = jr.qd;
    qdd_d.segment<3>(3 * i) = jr.qdd;
  }

  const VectorXd B = sc.gains.B(t);
  const VectorXd K = sc.gains.K(t);
  const VectorXd& Mf = sc.gains.M;

  // Filter outputs; the T_ext part of wdd is deferred to the lambda coupling.
  const VectorXd& w = st.fx1;
  const VectorXd& wd = st.fx2;
  const VectorXd wdd0 =
      ((-B.cwiseProduct(wd) - K.cwiseProduct(w)).array() / Mf.array()).matrix();

  const ReferenceSignals ref = reference_signals(q_d, qd_d, qdd_d, st.q, st.qd, w, wd,
                                                 wdd0, sc.gains.Lambda);

  detail::KktProblem p;
  p.n = n;
  p.D.resize(n);
  p.J.resize(n);
  p.Jdot.resize(n);
  p.h.resize(n);
  p.tau_term.resize(n);
  p.torque_fixed.assign(n, {false, false, false});
  p.minv_f.resize(n);
  std::vector<Vector3d> tau_v0(n);
  for (int i = 0; i < n; ++i) {
    const Vector3d qi = st.q.segment<3>(3 * i);
    const Vector3d qdi = st.qd.segment<3>(3 * i);
    const RigidBodyTerms rb = augmented_matrices(sc.robots[i], qi, qdi, sc.load.gravity);
    p.D[i] = rb.D;
    p.h[i] = rb.C * qdi + rb.g;
    p.J[i] = jacobian(sc.robots[i], qi);
    p.Jdot[i] = jacobian_dot(sc.robots[i], qi, qdi);
    p.minv_f[i] = Mf.segment<3>(3 * i);
    // Virtual torque without its -T_ext and filter-T_ext parts.
    tau_v0[i] = rb.D * ref.qdd_r.segment<3>(3 * i) + rb.C * ref.qd_r.segment<3>(3 * i) +
                rb.g -
                sc.gains.K_d.segment<3>(3 * i).cwiseProduct(ref.S.segment<3>(3 * i));
    p.tau_term[i] = tau_v0[i];
  }
  detail::fill_constraint_terms(sc, st, p);

  out.tau_v.resize(nq);
  out.u.resize(nq);
  out.U.resize(nq);
  out.tau_ext.resize(nq);
  detail::KktSolution sol;
  for (int pass = 0; pass < 10; ++pass) {
    sol = detail::solve_kkt(p);
    bool set_changed = false;
    out.any_saturated = false;
    for (int i = 0; i < n; ++i) {
      const Matrix3d Jt = p.J[i].transpose();
      const Vector3d tau_ext_i = Jt * sol.lambda[i];
      const Vector3d tau_v_i =
          tau_v0[i] -
          (p.D[i] * p.minv_f[i].cwiseInverse().asDiagonal() * tau_ext_i + tau_ext_i);
      out.tau_ext.segment<3>(3 * i) = tau_ext_i;
      out.tau_v.segment<3>(3 * i) = tau_v_i;
      for (int j = 0; j < 3; ++j) {
        const ActuatorParams& act = sc.robots[i].actuators[j];
        const SvcResult svc = svc_modulate(tau_v_i(j), st.vs, act);
        out.u(3 * i + j) = svc.u;
        out.U(3 * i + j) = applied_input(svc.u, st.vs, act);
        out.any_saturated = out.any_saturated || svc.saturated;
        if (svc.saturated != p.torque_fixed[i][j]) {
          set_changed = true;
          p.torque_fixed[i][j] = svc.saturated;
          p.tau_term[i](j) = svc.saturated ? out.U(3 * i + j) : tau_v0[i](j);
        }
      }
    }
    if (!set_changed) break;
  }

  out.wrenches.F = sol.lambda;
  out.qdd = sol.qdd;
  out.load_acc = sol.load_acc;
  out.S = ref.S;
  out.zeta = auxiliary_error(q_d, st.q, w);
  out.q_ref = q_d;
  out.qd_ref = qd_d;
  double r2 = 0.0;
  for (int i = 0; i < n; ++i) r2 += p.phi[i].squaredNorm();
  out.residual_norm = std::sqrt(r2);

  rates.q = st.qd;
  rates.qd = sol.qdd;
  rates.load_q = st.load_v;
  rates.load_v = sol.load_acc;
  rates.fx1 = st.fx2;
  rates.fx2 =
      ((out.tau_ext - B.cwiseProduct(wd) - K.cwiseProduct(w)).array() / Mf.array())
          .matrix();
}

// ---------------------------------------------------------------------------
// Time integration
// ---------------------------------------------------------------------------

/// Fixed-step RK4 advance of the coupled plant + controller filters. Returns
/// the stage-1 outputs, i.e. the instantaneous controls at the step start.
inline StageOutputs step(const Scenario& sc, SystemState& st, double dt) {
  SystemState work = st;
  SystemState k1 = st, k2 = st, k3 = st, k4 = st;
  StageOutputs out1, oscratch;

  eval_closed_loop(sc, st, k1, out1);

  auto advance = [&](const SystemState& base, const SystemState& k, double h,
                     SystemState& dst) {
    dst.q = base.q + h * k.q;
    dst.qd = base.qd + h * k.qd;
    dst.load_q = base.load_q + h * k.load_q;
    dst.load_v = base.load_v + h * k.load_v;
    dst.fx1 = base.fx1 + h * k.fx1;
    dst.fx2 = base.fx2 + h * k.fx2;
    dst.vs = base.vs;
  };

  advance(st, k1, 0.5 * dt, work);
  work.t = st.t + 0.5 * dt;
  eval_closed_loop(sc, work, k2, oscratch);

  advance(st, k2, 0.5 * dt, work);
  work.t = st.t + 0.5 * dt;
  eval_closed_loop(sc, work, k3, oscratch);

  advance(st, k3, dt, work);
  work.t = st.t + dt;
  eval_closed_loop(sc, work, k4, oscratch);

  const double h6 = dt / 6.0;
  st.q += h6 * (k1.q + 2.0 * k2.q + 2.0 * k3.q + k4.q);
  st.qd += h6 * (k1.qd + 2.0 * k2.qd + 2.0 * k3.qd + k4.qd);
  st.load_q += h6 * (k1.load_q + 2.0 * k2.load_q + 2.0 * k3.load_q + k4.load_q);
  st.load_v += h6 * (k1.load_v + 2.0 * k2.load_v + 2.0 * k3.load_v + k4.load_v);
  st.fx1 += h6 * (k1.fx1 + 2.0 * k2.fx1 + 2.0 * k3.fx1 + k4.fx1);
  st.fx2 += h6 * (k1.fx2 + 2.0 * k2.fx2 + 2.0 * k3.fx2 + k4.fx2);
  st.t += dt;

  if (!st.q.allFinite() || !st.qd.allFinite() || !st.load_q.allFinite() ||
      !st.load_v.allFinite() || !st.fx1.allFinite() || !st.fx2.allFinite())
    throw IntegrationDivergedError(st.t);
  return out1;
}

/// Initial state with the grasp exactly closed: joints from IK of the t=0
/// end-effector references, everything at rest.
inline SystemState initial_state(const Scenario& sc) {
  const int n = sc.n_robots();
  SystemState st;
  st.q.resize(3 * n);
  st.qd = VectorXd::Zero(3 * n);
  st.fx1 = VectorXd::Zero(3 * n);
  st.fx2 = VectorXd::Zero(3 * n);
  const TrajectoryPoint load_ref =
      quintic_trajectory(sc.traj.p0, sc.traj.pf, sc.traj.T, 0.0);
  for (int i = 0; i < n; ++i) {
    const TrajectoryPoint ee_ref = load_to_ee_reference(load_ref, sc.load.grasp.r[i]);
    st.q.segment<3>(3 * i) =
        inverse_kinematics(sc.robots[i], ee_ref.pose, sc.branches[i]);
  }
  st.load_q = sc.traj.p0.vec();
  st.load_v = Vector3d::Zero();
  st.t = 0.0;
  st.vs = sc.sim.vs0;
  return st;
}

// ---------------------------------------------------------------------------
// Rollout
// ---------------------------------------------------------------------------

struct TraceRow {
  double t;
  VectorXd q, qd, qdd, u, tau_v, tau_ext, power, S, zeta, q_ref;
  double dEs_cum, drift, vs;
};

struct RolloutMetrics {
  double final_pos_error = 0.0;  // load CM distance to desired final position
  bool in_is_set = false;
  double max_joint_error = 0.0;  // max |q_d - q| over the rollout
  double max_drift = 0.0;
  double saturation_duty = 0.0;  // fraction of samples with any converter clamped
  bool diverged = false;
  double diverged_at = 0.0;
};

struct RolloutResult {
  EnergyLedger ledger;
  RolloutMetrics metrics;
  std::vector<TraceRow> trace;
};

namespace detail {

inline EnergySample make_energy_sample(const Scenario& sc, const SystemState& st,
                                       const StageOutputs& out) {
  const int nq = sc.joints();
  EnergySample s;
  s.t = st.t;
  s.per_joint_power.resize(nq);
  for (int i = 0; i < sc.n_robots(); ++i) {
    for (int j = 0; j < 3; ++j) {
      const ActuatorParams& act = sc.robots[i].actuators[j];
      const int k = 3 * i + j;
      const double qd = st.qd(k);
      const double U = out.U(k);
      const double p_storage = qd * U - act.resistance / (act.a() * act.a()) * U * U;
      s.per_joint_power(k) = p_storage;
      s.storage_rate += p_storage;
      s.nr_consumption_rate += std::max(-p_storage, 0.0);
      s.joule_rate += joule_loss_rate(U, qd, act);
      s.mech_loss_rate += act.viscous_friction * act.gear_ratio * act.gear_ratio * qd * qd;
      s.mech_energy_crm +=
          0.5 * act.rotor_inertia * act.gear_ratio * act.gear_ratio * qd * qd;
    }
    s.mech_energy_crm += link_mechanical_energy(
        sc.robots[i], st.q.segment<3>(3 * i), st.qd.segment<3>(3 * i), sc.load.gravity);
  }
  s.w_ext_rate = st.qd.dot(out.tau_ext);
  s.mech_energy_load = 0.5 * sc.load.mass * st.load_v.head<2>().squaredNorm() +
                       0.5 * sc.load.inertia * st.load_v.z() * st.load_v.z() -
                       sc.load.mass * sc.load.gravity.dot(st.load_q.head<2>());
  return s;
}

inline TraceRow make_trace_row(const SystemState& st, const StageOutputs& out,
                               const EnergySample& es, double dEs_cum) {
  TraceRow row;
  row.t = st.t;
  row.q = st.q;
  row.qd = st.qd;
  row.qdd = out.qdd;
  row.u = out.u;
  row.tau_v = out.tau_v;
  row.tau_ext = out.tau_ext;
  row.power = es.per_joint_power;
  row.S = out.S;
  row.zeta = out.zeta;
  row.q_ref = out.q_ref;
  row.dEs_cum = dEs_cum;
  row.drift = out.residual_norm;
  row.vs = st.vs;
  return row;
}

}  // namespace detail

/// Full closed-chain maneuver from t = 0 to t = T. Allows an initial-state
/// override for tests that need a perturbed start.
inline RolloutResult rollout(const Scenario& sc, bool record_trace = true,
                             const SystemState* initial = nullptr) {
  RolloutResult res;
  SystemState st = initial ? *initial : initial_state(sc);
  const int steps = static_cast<int>(std::llround(sc.traj.T / sc.sim.dt));
  int saturated_samples = 0;

  auto record = [&](const SystemState& state, const StageOutputs& out) {
    const EnergySample es = detail::make_energy_sample(sc, state, out);
    res.ledger.accumulate(es);
    if (record_trace)
      res.trace.push_back(detail::make_trace_row(state, out, es, res.ledger.dE_s));
    res.metrics.max_drift = std::max(res.metrics.max_drift, out.residual_norm);
    double jerr = 0.0;
    for (int k = 0; k < state.q.size(); ++k)
      jerr = std::max(jerr, std::abs(wrap_pi(out.q_ref(k) - state.q(k))));
    res.metrics.max_joint_error = std::max(res.metrics.max_joint_error, jerr);
    if (out.any_saturated) ++saturated_samples;
  };

  try {
    for (int k = 0; k < steps; ++k) {
      const SystemState pre = st;
      const StageOutputs out = step(sc, st, sc.sim.dt);  // out belongs to `pre`
      record(pre, out);
      if (sc.sim.storage_mode == StorageMode::Ultracap) {
        const double e_now =
            0.5 * sc.sim.capacitance * sc.sim.vs0 * sc.sim.vs0 + res.ledger.dE_s;
        if (e_now <= 0.0) throw StorageDepletedError("storage element depleted");
        st.vs = std::sqrt(2.0 * e_now / sc.sim.capacitance);
      }
    }
    // Final sample at t = T.
    SystemState rates = st;
    StageOutputs out;
    eval_closed_loop(sc, st, rates, out);
    record(st, out);
  } catch (const IntegrationDivergedError& e) {
    res.metrics.diverged = true;
    res.metrics.diverged_at = e.t;
  }

  const int samples = static_cast<int>(res.ledger.times.size());
  if (samples > 0)
    res.metrics.saturation_duty = static_cast<double>(saturated_samples) / samples;
  const TrajectoryPoint final_ref =
      quintic_trajectory(sc.traj.p0, sc.traj.pf, sc.traj.T, sc.traj.T);
  if (!res.metrics.diverged) {
    res.metrics.final_pos_error =
        (st.load_q.head<2>() - final_ref.pose.position()).norm();
    res.metrics.in_is_set = res.metrics.final_pos_error <= sc.sim.eps_f;
  }
  return res;
}

}  // namespace crmsim
