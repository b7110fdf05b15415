#pragma once

#include "crmsim/types.hpp"

namespace crmsim {

// ---------------------------------------------------------------------------
// Instantaneous rates
// ---------------------------------------------------------------------------

/// Joule loss rate L_R = (R/a^2) U^2 + (a^2/R) qd^2 - 2 U qd. Equals R I^2
/// with I the armature current, so it is nonnegative for all inputs.
inline double joule_loss_rate(double tau_v, double qd, const ActuatorParams& act) {
  const double a2R = act.a() * act.a() / act.resistance;
  return (tau_v * tau_v) / a2R + a2R * qd * qd - 2.0 * tau_v * qd;
}

/// Instantaneous storage power qd^T T_v - T_v^T R_a T_v with
/// R_a = diag(R/a^2). Positive means the storage element is charging.
inline double storage_power(const VectorXd& tau_v, const VectorXd& qd,
                            const VectorXd& R_a) {
  return qd.dot(tau_v) - tau_v.dot(R_a.cwiseProduct(tau_v));
}

// ---------------------------------------------------------------------------
// Ledger
// ---------------------------------------------------------------------------

/// One endpoint sample of all energy rates plus the current mechanical energy
/// levels. The ledger integrates rates with the trapezoidal rule and takes
/// differences of the energy levels.
struct EnergySample {
  double t = 0.0;
  double storage_rate = 0.0;       // dE_s/dt
  double w_ext_rate = 0.0;         // qd^T T_ext
  double mech_loss_rate = 0.0;     // sum b n^2 qd^2
  double joule_rate = 0.0;         // sum L_R
  double nr_consumption_rate = 0.0;  // per-joint consumption, negatives clipped
  double mech_energy_crm = 0.0;    // links + reflected rotor kinetic
  double mech_energy_load = 0.0;
  VectorXd per_joint_power;        // storage-side power per joint
};

struct EnergyLedger {
  double dE_s = 0.0;        // net charge into storage
  double W_ext = 0.0;       // work done by the load on the robots
  double dE_m_tot = 0.0;    // CRM mechanical energy change (links + rotors)
  double dE_m_load = 0.0;   // load mechanical energy change
  double sigma_m_tot = 0.0; // mechanical (friction) losses
  double sigma_e = 0.0;     // Joule losses
  double dE_nr = 0.0;       // non-regenerative consumption baseline
  std::vector<double> times;
  std::vector<VectorXd> per_joint_power;

  bool primed = false;
  EnergySample prev;
  double mech_energy_crm_0 = 0.0;
  double mech_energy_load_0 = 0.0;

  /// Consumption with regeneration: positive when the maneuver drained the
  /// storage element.
  double dE_r() const { return -dE_s; }

  double closure_residual() const {
    return W_ext - (dE_s + dE_m_tot + sigma_m_tot + sigma_e);
  }

  void accumulate(const EnergySample& s) {
    if (!primed) {
      primed = true;
      mech_energy_crm_0 = s.mech_energy_crm;
      mech_energy_load_0 = s.mech_energy_load;
    } else {
      const double h = 0.5 * (s.t - prev.t);
      dE_s += h * (prev.storage_rate + s.storage_rate);
      W_ext += h * (prev.w_ext_rate + s.w_ext_rate);
      sigma_m_tot += h * (prev.mech_loss_rate + s.mech_loss_rate);
      sigma_e += h * (prev.joule_rate + s.joule_rate);
      dE_nr += h * (prev.nr_consumption_rate + s.nr_consumption_rate);
    }
    dE_m_tot = s.mech_energy_crm - mech_energy_crm_0;
    dE_m_load = s.mech_energy_load - mech_energy_load_0;
    times.push_back(s.t);
    per_joint_power.push_back(s.per_joint_power);
    prev = s;
  }

  /// Sum two ledgers from independent rollouts (parallel scenario sweeps).
  void merge(const EnergyLedger& other) {
    dE_s += other.dE_s;
    W_ext += other.W_ext;
    dE_m_tot += other.dE_m_tot;
    dE_m_load += other.dE_m_load;
    sigma_m_tot += other.sigma_m_tot;
    sigma_e += other.sigma_e;
    dE_nr += other.dE_nr;
  }
};

/// epsilon = 1 - dE_R / dE_NR, both arguments positive consumption magnitudes.
inline double effectiveness(double dE_R, double dE_NR) {
  if (dE_NR == 0.0)
    throw DomainError("effectiveness: dE_NR is zero, effectiveness undefined");
  return 1.0 - dE_R / dE_NR;
}

// ---------------------------------------------------------------------------
// Sankey export
// ---------------------------------------------------------------------------

struct EnergyFlow {
  std::string source;
  std::string sink;
  double joules;
};

/// Signed flow list whose (sources minus sinks) total equals the closure
/// residual by construction.
inline std::vector<EnergyFlow> sankey_export(const EnergyLedger& ledger) {
  std::vector<EnergyFlow> flows;
  auto push = [&](const std::string& a, const std::string& b, double j) {
    if (j >= 0.0)
      flows.push_back({a, b, j});
    else
      flows.push_back({b, a, -j});
  };
  push("external_work", "system", ledger.W_ext);
  push("system", "storage", ledger.dE_s);
  push("system", "mechanical_loss", ledger.sigma_m_tot);
  push("system", "joule_loss", ledger.sigma_e);
  push("system", "mechanical_energy", ledger.dE_m_tot);
  return flows;
}

inline double sankey_balance(const std::vector<EnergyFlow>& flows) {
  double total = 0.0;
  for (const auto& f : flows) {
    if (f.sink == "system") total += f.joules;
    if (f.source == "system") total -= f.joules;
  }
  return total;
}

}  // namespace crmsim
