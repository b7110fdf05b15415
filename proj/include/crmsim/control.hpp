#pragma once

#include "crmsim/types.hpp"

namespace crmsim {

// ---------------------------------------------------------------------------
// Gains and schedules
// ---------------------------------------------------------------------------

/// Piecewise-linear schedule for the gain offsets. Rows are sample times with
/// one B-bar and one K-bar entry per joint; values interpolate linearly and
/// rates are the segment slopes (right-continuous).
struct GainSchedule {
  VectorXd times;
  MatrixXd b_bar;  // rows x nN
  MatrixXd k_bar;

  bool empty() const { return times.size() == 0; }

  int segment(double t) const {
    int s = 0;
    while (s + 2 < times.size() && t >= times(s + 1)) ++s;
    return s;
  }

  void value(double t, VectorXd& b, VectorXd& k) const {
    if (times.size() == 1 || t <= times(0)) {
      b = b_bar.row(0);
      k = k_bar.row(0);
      return;
    }
    if (t >= times(times.size() - 1)) {
      b = b_bar.row(b_bar.rows() - 1);
      k = k_bar.row(k_bar.rows() - 1);
      return;
    }
    const int s = segment(t);
    const double w = (t - times(s)) / (times(s + 1) - times(s));
    b = (1.0 - w) * b_bar.row(s) + w * b_bar.row(s + 1);
    k = (1.0 - w) * k_bar.row(s) + w * k_bar.row(s + 1);
  }

  void rate(double t, VectorXd& bd, VectorXd& kd) const {
    if (times.size() == 1 || t < times(0) || t >= times(times.size() - 1)) {
      bd = VectorXd::Zero(b_bar.cols());
      kd = VectorXd::Zero(k_bar.cols());
      return;
    }
    const int s = segment(t);
    const double h = times(s + 1) - times(s);
    bd = (b_bar.row(s + 1) - b_bar.row(s)) / h;
    kd = (k_bar.row(s + 1) - k_bar.row(s)) / h;
  }
};

/// Diagonal impedance gains for all nN joints, split into fixed parts and
/// bounded offsets. B(t) = B_c + B_bar(t), K(t) = K_c + K_bar(t).
struct ImpedanceGains {
  VectorXd M;       // desired inertia
  VectorXd B_c;     // fixed damping
  VectorXd K_c;     // fixed stiffness
  VectorXd B_bar;   // constant offsets (ignored when a schedule is set)
  VectorXd K_bar;
  VectorXd Lambda;  // auxiliary-error bandwidth
  VectorXd K_d;     // sliding-term gain
  GainSchedule schedule;

  static ImpedanceGains uniform(int n_joints, double m = 18.0, double bc = 197.5,
                                double kc = 825.0, double lambda = 20.0,
                                double kd = 30.0) {
    ImpedanceGains g;
    g.M = VectorXd::Constant(n_joints, m);
    g.B_c = VectorXd::Constant(n_joints, bc);
    g.K_c = VectorXd::Constant(n_joints, kc);
    g.B_bar = VectorXd::Zero(n_joints);
    g.K_bar = VectorXd::Zero(n_joints);
    g.Lambda = VectorXd::Constant(n_joints, lambda);
    g.K_d = VectorXd::Constant(n_joints, kd);
    return g;
  }

  int joints() const { return static_cast<int>(M.size()); }

  VectorXd B(double t) const {
    if (schedule.empty()) return B_c + B_bar;
    VectorXd b, k;
    schedule.value(t, b, k);
    return B_c + b;
  }
  VectorXd K(double t) const {
    if (schedule.empty()) return K_c + K_bar;
    VectorXd b, k;
    schedule.value(t, b, k);
    return K_c + k;
  }
  VectorXd B_dot(double t) const {
    if (schedule.empty()) return VectorXd::Zero(joints());
    VectorXd bd, kd;
    schedule.rate(t, bd, kd);
    return bd;
  }
  VectorXd K_dot(double t) const {
    if (schedule.empty()) return VectorXd::Zero(joints());
    VectorXd bd, kd;
    schedule.rate(t, bd, kd);
    return kd;
  }
};

// ---------------------------------------------------------------------------
// Impedance filter  w = [p^2 M + p B + K]^-1 T_ext
// ---------------------------------------------------------------------------

/// Second-order filter state, one channel per joint: x1 = w, x2 = wdot.
struct ControllerState {
  VectorXd x1;
  VectorXd x2;

  explicit ControllerState(int n = 0)
      : x1(VectorXd::Zero(n)), x2(VectorXd::Zero(n)) {}
};

struct FilterOutput {
  VectorXd w, wd, wdd;
};

/// wdd reconstructed algebraically from the state equation; never from
/// numerical differentiation.
inline VectorXd filter_acceleration(const VectorXd& x1, const VectorXd& x2,
                                    const VectorXd& tau_ext, const VectorXd& M,
                                    const VectorXd& B, const VectorXd& K) {
  return ((tau_ext - B.cwiseProduct(x2) - K.cwiseProduct(x1)).array() / M.array())
      .matrix();
}

/// One RK4 step of the filter alone, holding tau_ext constant. The coupled
/// simulator integrates the same state equation stage-by-stage with the plant.
inline FilterOutput impedance_filter_step(ControllerState& cs, const VectorXd& tau_ext,
                                          const ImpedanceGains& gains, double t,
                                          double dt) {
  auto deriv = [&](const VectorXd& x1, const VectorXd& x2, double ts, VectorXd& d1,
                   VectorXd& d2) {
    d1 = x2;
    d2 = filter_acceleration(x1, x2, tau_ext, gains.M, gains.B(ts), gains.K(ts));
  };
  VectorXd k1a, k1b, k2a, k2b, k3a, k3b, k4a, k4b;
  deriv(cs.x1, cs.x2, t, k1a, k1b);
  deriv(cs.x1 + 0.5 * dt * k1a, cs.x2 + 0.5 * dt * k1b, t + 0.5 * dt, k2a, k2b);
  deriv(cs.x1 + 0.5 * dt * k2a, cs.x2 + 0.5 * dt * k2b, t + 0.5 * dt, k3a, k3b);
  deriv(cs.x1 + dt * k3a, cs.x2 + dt * k3b, t + dt, k4a, k4b);
  cs.x1 += dt / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
  cs.x2 += dt / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);

  FilterOutput out;
  out.w = cs.x1;
  out.wd = cs.x2;
  out.wdd = filter_acceleration(cs.x1, cs.x2, tau_ext, gains.M, gains.B(t + dt),
                                gains.K(t + dt));
  return out;
}

// ---------------------------------------------------------------------------
// Controller algebra
// ---------------------------------------------------------------------------

/// zeta = (q_d - q) - w, with the position error wrapped joint-wise.
inline VectorXd auxiliary_error(const VectorXd& q_d, const VectorXd& q,
                                const VectorXd& w) {
  VectorXd zeta(q.size());
  for (int i = 0; i < q.size(); ++i) zeta(i) = wrap_pi(q_d(i) - q(i)) - w(i);
  return zeta;
}

struct ReferenceSignals {
  VectorXd S, qd_r, qdd_r;
};

/// qd_r = qd_d + Lambda qtilde - (wd + Lambda w)
/// qdd_r = qdd_d + Lambda qtilde_dot - (wdd + Lambda wd)
/// S = qd_r - qd  (equivalently -(zeta_dot + Lambda zeta))
inline ReferenceSignals reference_signals(const VectorXd& q_d, const VectorXd& qd_d,
                                          const VectorXd& qdd_d, const VectorXd& q,
                                          const VectorXd& qd, const VectorXd& w,
                                          const VectorXd& wd, const VectorXd& wdd,
                                          const VectorXd& Lambda) {
  VectorXd qtilde(q.size());
  for (int i = 0; i < q.size(); ++i) qtilde(i) = wrap_pi(q_d(i) - q(i));
  const VectorXd qtilde_dot = qd_d - qd;
  ReferenceSignals out;
  out.qd_r = qd_d + Lambda.cwiseProduct(qtilde) - (wd + Lambda.cwiseProduct(w));
  out.qdd_r = qdd_d + Lambda.cwiseProduct(qtilde_dot) - (wdd + Lambda.cwiseProduct(wd));
  out.S = out.qd_r - qd;
  return out;
}

/// T_v = D qdd_r + C qd_r + G - K_D S - T_ext (augmented D, C).
inline VectorXd virtual_torque(const Matrix3d& D, const Matrix3d& C, const Vector3d& G,
                               const Vector3d& qd_r, const Vector3d& qdd_r,
                               const Vector3d& S, const Vector3d& tau_ext,
                               const Vector3d& K_d) {
  return D * qdd_r + C * qd_r + G - K_d.cwiseProduct(S) - tau_ext;
}

// ---------------------------------------------------------------------------
// Semi-active virtual control
// ---------------------------------------------------------------------------

struct SvcResult {
  double u;        // converter voltage ratio, clamped to [-1, 1]
  bool saturated;
};

/// Solves tau_v = a u Vs / R for u and clamps to the physical ratio range.
inline SvcResult svc_modulate(double tau_v, double vs, const ActuatorParams& act) {
  if (vs <= 0.0) throw StorageDepletedError("svc_modulate: storage voltage <= 0");
  const double u_raw = tau_v * act.resistance / (act.a() * vs);
  SvcResult out;
  out.saturated = std::abs(u_raw) > 1.0;
  out.u = std::clamp(u_raw, -1.0, 1.0);
  return out;
}

/// U = a u Vs / R; equals tau_v exactly when unsaturated.
inline double applied_input(double u, double vs, const ActuatorParams& act) {
  return act.a() * u * vs / act.resistance;
}

// ---------------------------------------------------------------------------
// Passivity certificate for time-varying gains
// ---------------------------------------------------------------------------

enum class PassivityRegime { ND, PD, ID };

inline const char* regime_name(PassivityRegime r) {
  switch (r) {
    case PassivityRegime::ND: return "ND";
    case PassivityRegime::PD: return "PD";
    default: return "ID";
  }
}

struct PassivityReport {
  double lambda_bar;    // largest eigenvalue of P-bar
  double lambda_B_min;  // smallest eigenvalue of B
  double margin;        // 2 lambda_B_min^2 - lambda_bar
  PassivityRegime regime;
  bool passive() const { return margin > 0.0; }
};

/// Assembles P-bar = [Kdot, K - K B; K - B K, M Bdot] (diagonal gains make it
/// symmetric and block-decoupled per joint) and evaluates the sufficient
/// condition lambda_max(P-bar) < 2 lambda_min(B)^2.
inline PassivityReport passivity_check(const VectorXd& B, const VectorXd& K,
                                       const VectorXd& B_dot, const VectorXd& K_dot,
                                       const VectorXd& M) {
  if (B.minCoeff() <= 0.0 || K.minCoeff() <= 0.0)
    throw InvalidGainsError("passivity_check: B and K must be positive definite");

  double lmax = -std::numeric_limits<double>::infinity();
  double lmin = std::numeric_limits<double>::infinity();
  for (int j = 0; j < B.size(); ++j) {
    // Per-joint 2x2 symmetric block [a, b; b, c].
    const double a = K_dot(j);
    const double b = K(j) * (1.0 - B(j));
    const double c = M(j) * B_dot(j);
    const double mid = 0.5 * (a + c);
    const double rad = std::sqrt(0.25 * (a - c) * (a - c) + b * b);
    lmax = std::max(lmax, mid + rad);
    lmin = std::min(lmin, mid - rad);
  }

  PassivityReport rep;
  rep.lambda_bar = lmax;
  rep.lambda_B_min = B.minCoeff();
  rep.margin = 2.0 * rep.lambda_B_min * rep.lambda_B_min - rep.lambda_bar;
  constexpr double tol = 1e-12;
  if (lmax <= tol)
    rep.regime = PassivityRegime::ND;  // boundary (P-bar = 0) counts as ND
  else if (lmin >= -tol)
    rep.regime = PassivityRegime::PD;
  else
    rep.regime = PassivityRegime::ID;
  return rep;
}

}  // namespace crmsim
