// Acceptance gate: twelve pass/fail checks covering maneuver completion,
// regeneration accounting, optimization, and the property suite. Each check
// prints exactly one PASS/FAIL line; the exit code is the failure count.
#include <chrono>
#include <iostream>
#include <random>
#include <sstream>

#include "crmsim/optimize.hpp"

using namespace crmsim;

namespace {

int failures = 0;

void report(int id, const char* name, bool ok, const std::string& detail) {
  if (!ok) ++failures;
  std::cout << (ok ? "PASS" : "FAIL") << " " << id << " " << name << ": " << detail
            << "\n";
  std::cout.flush();
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(4);
  ss << v;
  return ss.str();
}

MatrixXd stacked_inertia(const Scenario& sc, const VectorXd& q) {
  MatrixXd D = MatrixXd::Zero(q.size(), q.size());
  for (int i = 0; i < sc.n_robots(); ++i)
    D.block<3, 3>(3 * i, 3 * i) =
        augmented_matrices(sc.robots[i], q.segment<3>(3 * i), Vector3d::Zero(),
                           sc.load.gravity)
            .D;
  return D;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string configs = argc > 1 ? argv[1] : "configs";

  const ScenarioConfig table_cfg =
      load_scenario_file(configs + "/table_i_maneuver.json");
  const Scenario& table = table_cfg.scenario;

  // --- 1: nominal maneuver completes with tight tracking, fast enough -------
  const auto t0 = std::chrono::steady_clock::now();
  const RolloutResult nominal = rollout(table);
  const double runtime = seconds_since(t0);
  report(1, "maneuver-completion",
         !nominal.metrics.diverged && nominal.metrics.in_is_set &&
             nominal.metrics.max_joint_error < 0.05 && runtime < 30.0,
         "final error " + fmt(nominal.metrics.final_pos_error * 1e3) +
             " mm, max joint error " + fmt(nominal.metrics.max_joint_error) +
             " rad, runtime " + fmt(runtime) + " s");

  // --- 2: regeneration effectiveness --------------------------------------
  {
    const double eps_ref = effectiveness(9.69, 25.84);
    const double dE_R = nominal.ledger.dE_r();
    const double dE_NR = nominal.ledger.dE_nr;
    const double eps = effectiveness(dE_R, dE_NR);
    report(2, "regeneration-effectiveness",
           std::abs(eps_ref - 0.625) < 1e-12 && dE_NR > dE_R && eps >= 0.4 &&
               eps <= 0.8,
           "reference 0.625, simulated " + fmt(eps) + " (dE_R " + fmt(dE_R) +
               " J, dE_NR " + fmt(dE_NR) + " J)");
  }

  // --- 3: genetic optimization beats the zero-offset baseline --------------
  {
    const ScenarioConfig ga_cfg = load_scenario_file(configs + "/ga_joint_offsets.json");
    const auto tga = std::chrono::steady_clock::now();
    const Candidate baseline = evaluate_candidate(
        ga_cfg.scenario, ga_cfg.ga, VectorXd::Zero(genome_size(ga_cfg.scenario, ga_cfg.ga)));
    const GaResult res = ga_run(ga_cfg.scenario, ga_cfg.ga);
    const double ga_runtime = seconds_since(tga);
    bool in_box = res.best.genes.size() == 12;
    for (int i = 0; i < res.best.genes.size() && in_box; ++i) {
      const double lb = i < 6 ? ga_cfg.ga.bounds.lb_b : ga_cfg.ga.bounds.lb_k;
      const double ub = i < 6 ? ga_cfg.ga.bounds.ub_b : ga_cfg.ga.bounds.ub_k;
      in_box = res.best.genes(i) >= lb && res.best.genes(i) <= ub;
    }
    report(3, "ga-improvement",
           baseline.feasible && res.best.feasible &&
               res.best.fitness > baseline.fitness && in_box &&
               ga_runtime < 1800.0,
           "baseline dE_s " + fmt(baseline.fitness) + " J, best " +
               fmt(res.best.fitness) + " J, " + fmt(ga_runtime) + " s");
  }

  // --- 4: skew-symmetry of Ddot - 2C ---------------------------------------
  {
    RobotModel r;
    r.close_inertias_as_rods();
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> ang(-M_PI, M_PI);
    std::uniform_real_distribution<double> vel(-3.0, 3.0);
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
      const Vector3d q(ang(rng), ang(rng), ang(rng));
      const Vector3d qd(vel(rng), vel(rng), vel(rng));
      const Matrix3d C = rigid_body_matrices(r, q, qd).C;
      auto D = [&](double s) { return rigid_body_matrices(r, q + s * qd, qd).D; };
      const double h = 1e-4;
      const Matrix3d d1 = (D(h) - D(-h)) / (2.0 * h);
      const Matrix3d d2 = (D(0.5 * h) - D(-0.5 * h)) / h;
      const Matrix3d Ddot = (4.0 * d2 - d1) / 3.0;
      worst = std::max(worst, std::abs(qd.dot((Ddot - 2.0 * C) * qd)));
    }
    report(4, "skew-symmetry", worst < 1e-10, "worst |qd'(Ddot-2C)qd| = " + fmt(worst));
  }

  // --- 5: energy balance closure and dt-halving ratio ----------------------
  {
    auto closure_at = [&](double dt) {
      Scenario sc = table;
      sc.sim.dt = dt;
      const RolloutResult r = rollout(sc, false);
      const double scale =
          std::max({std::abs(r.ledger.W_ext), std::abs(r.ledger.dE_m_tot),
                    std::abs(r.ledger.sigma_e), 1.0});
      return std::pair<double, double>(r.ledger.closure_residual(), scale);
    };
    const auto [r_coarse, s_coarse] = closure_at(2e-3);
    const auto [r_fine, s_fine] = closure_at(1e-3);
    const double ratio = std::abs(r_coarse) / std::abs(r_fine);
    const double nominal_scale =
        std::max({std::abs(nominal.ledger.W_ext), std::abs(nominal.ledger.dE_m_tot),
                  std::abs(nominal.ledger.sigma_e), 1.0});
    report(5, "energy-closure",
           std::abs(nominal.ledger.closure_residual()) < 1e-3 * nominal_scale &&
               std::abs(r_coarse) < 1e-3 * s_coarse &&
               std::abs(r_fine) < 1e-3 * s_fine && ratio > 2.5 && ratio < 40.0,
           "residual " + fmt(nominal.ledger.closure_residual()) + " J, halving ratio " +
               fmt(ratio));
  }

  // --- 6: internal forces lie in the grasp null space ----------------------
  {
    std::mt19937_64 rng(103);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst = 0.0;
    for (int k = 0; k < 10000; ++k) {
      GraspGeometry geom;
      geom.r = {Vector2d(u(rng), u(rng)), Vector2d(u(rng), u(rng))};
      const MatrixXd Jo_T = grasp_matrix(geom, u(rng) * M_PI);
      VectorXd f(6);
      for (int i = 0; i < 6; ++i) f(i) = 10.0 * u(rng);
      const ForceDecomposition d = decompose_forces(f, Jo_T);
      worst = std::max(worst, (Jo_T * d.f_I).norm() / std::max(f.norm(), 1e-9));

      std::vector<Vector3d> rs = {Vector3d(u(rng), u(rng), u(rng)),
                                  Vector3d(u(rng), u(rng), u(rng))};
      const MatrixXd Js = grasp_matrix_spatial(rs);
      VectorXd fs(12);
      for (int i = 0; i < 12; ++i) fs(i) = 10.0 * u(rng);
      const ForceDecomposition ds = decompose_forces(fs, Js);
      worst = std::max(worst, (Js * ds.f_I).norm() / std::max(fs.norm(), 1e-9));
    }
    report(6, "internal-force-null-space", worst < 1e-10,
           "worst |Jo' f_I| / |f| = " + fmt(worst));
  }

  // --- 7: sliding energy is nonincreasing from a perturbed start -----------
  {
    Scenario sc = table;
    sc.sim.dt = 5e-4;
    SystemState st = initial_state(sc);
    TrajectoryPoint tp;
    tp.pose = PlanarPose(0.3005, 0.49975, 0.0005);
    tp.vel = Vector3d(0.004, -0.003, 0.01);
    st.load_q = tp.pose.vec();
    st.load_v = tp.vel;
    for (int i = 0; i < 2; ++i) {
      const TrajectoryPoint ee = load_to_ee_reference(tp, sc.load.grasp.r[i]);
      const JointReference jr = joint_reference(sc.robots[i], ee, sc.branches[i]);
      st.q.segment<3>(3 * i) = jr.q;
      st.qd.segment<3>(3 * i) = jr.qd;
    }
    const RolloutResult res = rollout(sc, true, &st);
    bool monotone = !res.metrics.diverged && res.metrics.saturation_duty == 0.0;
    double prev = std::numeric_limits<double>::infinity();
    double v0 = 0.0;
    for (size_t k = 0; k < res.trace.size() && monotone; k += 10) {
      const TraceRow& row = res.trace[k];
      const double v = row.S.dot(stacked_inertia(sc, row.q) * row.S);
      if (k == 0) v0 = v;
      if (v > prev * (1.0 + 1e-6) + 1e-12) monotone = false;
      prev = v;
    }
    report(7, "sliding-energy-monotone", monotone,
           "S'DS from " + fmt(v0) + " to " + fmt(prev) + ", saturation duty " +
               fmt(res.metrics.saturation_duty));
  }

  // --- 8: impedance relation realized asymptotically -----------------------
  {
    const double zeta_f = nominal.trace.back().zeta.norm();
    double worst_rel = 0.0;
    const size_t n_rows = nominal.trace.size();
    for (size_t k = n_rows - n_rows / 10; k < n_rows; ++k) {
      const TraceRow& row = nominal.trace[k];
      VectorXd resid(6);
      for (int i = 0; i < 2; ++i) {
        const TrajectoryPoint load_ref =
            quintic_trajectory(table.traj.p0, table.traj.pf, table.traj.T,
                               std::min(row.t, table.traj.T));
        const TrajectoryPoint ee = load_to_ee_reference(load_ref, table.load.grasp.r[i]);
        const JointReference jr = joint_reference(table.robots[i], ee, table.branches[i]);
        for (int j = 0; j < 3; ++j) {
          const int kk = 3 * i + j;
          const double qt = wrap_pi(jr.q(j) - row.q(kk));
          const double qtd = jr.qd(j) - row.qd(kk);
          const double qtdd = jr.qdd(j) - row.qdd(kk);
          resid(kk) = table.gains.M(kk) * qtdd + table.gains.B(row.t)(kk) * qtd +
                      table.gains.K(row.t)(kk) * qt - row.tau_ext(kk);
        }
      }
      worst_rel = std::max(worst_rel, resid.norm() / nominal.trace[k].tau_ext.norm());
    }
    report(8, "impedance-relation",
           zeta_f < 1e-3 && worst_rel < 0.01,
           "|zeta(T)| = " + fmt(zeta_f) + ", tail residual " + fmt(100.0 * worst_rel) +
               "% of |tau_ext|");
  }

  // --- 9: converter modulation inverts exactly off saturation --------------
  {
    ActuatorParams act;
    const double vs = 48.0, ceiling = act.torque_ceiling(vs);
    std::mt19937_64 rng(107);
    std::uniform_real_distribution<double> tau(-2.0 * ceiling, 2.0 * ceiling);
    bool ok = std::abs(ceiling - 420.0) < 1e-12;
    double worst = 0.0;
    for (int k = 0; k < 100000 && ok; ++k) {
      const double tv = tau(rng);
      const SvcResult r = svc_modulate(tv, vs, act);
      if (r.saturated != (std::abs(tv) > ceiling)) ok = false;
      if (!r.saturated) {
        const double U = applied_input(r.u, vs, act);
        worst = std::max(worst, std::abs(U - tv) / std::max(1.0, std::abs(tv)));
      }
    }
    ok = ok && worst < 1e-12;
    report(9, "svc-inverse-pair", ok, "worst relative mismatch " + fmt(worst));
  }

  // --- 10: passivity certificate -------------------------------------------
  {
    const int n = 6;
    const VectorXd M = VectorXd::Constant(n, 18.0);
    const VectorXd zero = VectorXd::Zero(n);
    const VectorXd B = VectorXd::Constant(n, 197.5);
    const VectorXd K = VectorXd::Constant(n, 825.0);
    const PassivityReport cg = passivity_check(B, K, zero, zero, M);
    const double expect = std::abs(825.0 * (1.0 - 197.5));
    bool ok = std::abs(cg.lambda_bar - expect) < 1e-12 * expect &&
              std::abs(cg.margin - (2.0 * 197.5 * 197.5 - expect)) < 1e-9;

    // Unit fixed gains for schedule audits.
    ImpedanceGains audit = ImpedanceGains::uniform(n, 1.0, 1.0, 1.0);
    auto sweep = [&](const std::string& file, bool& certified, double& first_bad,
                     double& spacing) {
      audit.schedule = load_schedule_file(configs + "/" + file, n);
      const double ta = audit.schedule.times(0);
      const double tb = audit.schedule.times(audit.schedule.times.size() - 1);
      const int samples = 2001;
      spacing = (tb - ta) / (samples - 1);
      certified = true;
      first_bad = -1.0;
      for (int k = 0; k < samples; ++k) {
        const double t = ta + spacing * k;
        const PassivityReport rep = passivity_check(audit.B(t), audit.K(t),
                                                    audit.B_dot(t), audit.K_dot(t),
                                                    audit.M);
        if (!rep.passive()) {
          certified = false;
          first_bad = t;
          break;
        }
      }
    };
    bool cert_ok, viol_ok;
    double fb, sp;
    sweep("schedule_slow_ramp.csv", cert_ok, fb, sp);
    ok = ok && cert_ok;
    sweep("schedule_violating.csv", viol_ok, fb, sp);
    ok = ok && !viol_ok && std::abs(fb - 0.5) <= sp + 1e-12;
    report(10, "passivity-certificate", ok,
           "constant-gain lambda matches; violating schedule first rejected at t = " +
               fmt(fb) + " s");
  }

  // --- 11: ga matches the exhaustive grid on the 2-variable scenario -------
  {
    const ScenarioConfig smoke = load_scenario_file(configs + "/ga_tied_smoke.json");
    const GridResult grid = grid_search(smoke.scenario, smoke.ga, 7);
    const GaResult ga = ga_run(smoke.scenario, smoke.ga);
    const double range = grid.fitness_max - grid.fitness_min;
    const bool ok = grid.feasible_count > 0 && ga.best.feasible &&
                    ga.best.fitness >= grid.fitness_max - 0.05 * range;
    report(11, "ga-vs-grid",
           ok,
           "grid best " + fmt(grid.fitness_max) + " J (range " + fmt(range) +
               "), ga best " + fmt(ga.best.fitness) + " J");
  }

  // --- 12: constraint drift and integrator order ---------------------------
  {
    auto final_state = [&](double dt) {
      Scenario sc = table;
      for (auto& r : sc.robots)
        for (auto& a : r.actuators) a.rotor_inertia = 1e-4;
      sc.sim.dt = dt;
      SystemState st = initial_state(sc);
      while (st.t < 0.05 - 0.5 * dt) step(sc, st, dt);
      return st.flatten();
    };
    const VectorXd ref = final_state(6.25e-5);
    const double e1 = (final_state(2e-3) - ref).norm();
    const double e2 = (final_state(1e-3) - ref).norm();
    const double ratio = e1 / e2;
    report(12, "drift-and-order",
           nominal.metrics.max_drift < 1e-6 && ratio > 10.0 && ratio < 25.0,
           "max drift " + fmt(nominal.metrics.max_drift) + " m, RK4 halving ratio " +
               fmt(ratio));
  }

  std::cout << (failures == 0 ? "ALL CRITERIA PASSED" : "CRITERIA FAILED") << " ("
            << (12 - failures) << "/12)\n";
  return failures;
}
