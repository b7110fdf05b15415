#pragma once

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "crmsim/simulation.hpp"

namespace crmsim {

using nlohmann::json;

// ---------------------------------------------------------------------------
// JSON (de)serialization. All quantities SI: meters, kilograms, seconds,
// radians, newtons, volts, ohms.
// ---------------------------------------------------------------------------

inline json to_json(const VectorXd& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline VectorXd vec_from_json(const json& a) {
  VectorXd v(a.size());
  for (size_t i = 0; i < a.size(); ++i) v(i) = a[i].get<double>();
  return v;
}

inline json to_json(const RobotModel& r) {
  json j;
  j["base_pose"] = {r.base_pose.x, r.base_pose.y, r.base_pose.phi};
  j["link_lengths"] = r.link_lengths;
  j["link_masses"] = r.link_masses;
  j["link_com_offsets"] = r.link_com_offsets;
  j["link_inertias"] = r.link_inertias;
  const ActuatorParams& a = r.actuators[0];  // identical per joint in configs
  j["actuator"] = {{"gear_ratio", a.gear_ratio},
                   {"motor_constant", a.motor_constant},
                   {"resistance", a.resistance},
                   {"rotor_inertia", a.rotor_inertia},
                   {"viscous_friction", a.viscous_friction}};
  return j;
}

inline RobotModel robot_from_json(const json& j) {
  RobotModel r;
  const auto& bp = j.at("base_pose");
  r.base_pose = PlanarPose(bp[0], bp[1], bp[2]);
  for (int k = 0; k < 3; ++k) {
    r.link_lengths[k] = j.at("link_lengths")[k];
    r.link_masses[k] = j.at("link_masses")[k];
    if (r.link_lengths[k] <= 0.0 || r.link_masses[k] <= 0.0)
      throw ConfigError("robot link lengths and masses must be positive");
  }
  r.close_inertias_as_rods();
  if (j.contains("link_com_offsets"))
    for (int k = 0; k < 3; ++k) r.link_com_offsets[k] = j["link_com_offsets"][k];
  if (j.contains("link_inertias"))
    for (int k = 0; k < 3; ++k) {
      r.link_inertias[k] = j["link_inertias"][k];
      if (r.link_inertias[k] < 0.0) throw ConfigError("link inertias must be >= 0");
    }
  const auto& a = j.at("actuator");
  ActuatorParams act;
  act.gear_ratio = a.at("gear_ratio");
  act.motor_constant = a.at("motor_constant");
  act.resistance = a.at("resistance");
  act.rotor_inertia = a.value("rotor_inertia", 0.0);
  act.viscous_friction = a.value("viscous_friction", 0.0);
  if (act.gear_ratio <= 0.0 || act.motor_constant <= 0.0 || act.resistance <= 0.0 ||
      act.rotor_inertia < 0.0 || act.viscous_friction < 0.0)
    throw ConfigError("invalid actuator parameters");
  r.actuators = {act, act, act};
  return r;
}

struct GaBounds {
  double lb_b = -22.0, ub_b = 22.0;
  double lb_k = -75.0, ub_k = 75.0;
};

struct GaConfig {
  int population = 50;
  int max_generations = 30;
  double crossover_prob = 0.75;
  double mutation_rate = 0.02;
  int elitism = 1;
  GaBounds bounds;
  bool tied_gains = false;  // 2-variable mode: one B-bar and one K-bar for all joints
  double dt_override = 0.0; // rollout dt for fitness evaluations (0: scenario dt)
};

inline json to_json(const GaConfig& g) {
  return json{{"population", g.population},
              {"max_generations", g.max_generations},
              {"crossover_prob", g.crossover_prob},
              {"mutation_rate", g.mutation_rate},
              {"elitism", g.elitism},
              {"tied_gains", g.tied_gains},
              {"dt_override", g.dt_override},
              {"bounds",
               {{"B", {g.bounds.lb_b, g.bounds.ub_b}},
                {"K", {g.bounds.lb_k, g.bounds.ub_k}}}}};
}

inline GaConfig ga_from_json(const json& j) {
  GaConfig g;
  g.population = j.value("population", 50);
  g.max_generations = j.value("max_generations", 30);
  g.crossover_prob = j.value("crossover_prob", 0.75);
  g.mutation_rate = j.value("mutation_rate", 0.02);
  g.elitism = j.value("elitism", 1);
  g.tied_gains = j.value("tied_gains", false);
  g.dt_override = j.value("dt_override", 0.0);
  if (j.contains("bounds")) {
    g.bounds.lb_b = j["bounds"]["B"][0];
    g.bounds.ub_b = j["bounds"]["B"][1];
    g.bounds.lb_k = j["bounds"]["K"][0];
    g.bounds.ub_k = j["bounds"]["K"][1];
  }
  if (g.population < 2) throw ConfigError("ga population must be >= 2");
  if (g.crossover_prob < 0.0 || g.crossover_prob > 1.0 || g.mutation_rate < 0.0 ||
      g.mutation_rate > 1.0)
    throw ConfigError("ga probabilities must be in [0, 1]");
  if (g.bounds.lb_b > g.bounds.ub_b || g.bounds.lb_k > g.bounds.ub_k)
    throw ConfigError("ga bounds must satisfy LB <= UB");
  return g;
}

struct ScenarioConfig {
  Scenario scenario;
  GaConfig ga;
  bool has_ga = false;
  std::string schedule_file;
};

inline json to_json(const Scenario& sc) {
  json j;
  j["schema_version"] = 1;
  j["seed"] = sc.seed;
  j["robots"] = json::array();
  for (size_t i = 0; i < sc.robots.size(); ++i) {
    json r = to_json(sc.robots[i]);
    r["ik_branch"] = sc.branches[i] == IkBranch::ElbowUp ? "elbow_up" : "elbow_down";
    j["robots"].push_back(r);
  }
  json load;
  load["mass"] = sc.load.mass;
  load["inertia"] = sc.load.inertia;
  load["gravity"] = {sc.load.gravity.x(), sc.load.gravity.y()};
  load["grasp_offsets"] = json::array();
  for (const auto& r : sc.load.grasp.r)
    load["grasp_offsets"].push_back({r.x(), r.y()});
  load["delta_R"] = sc.load.grasp.delta_R;
  j["load"] = load;
  j["trajectory"] = {{"p0", {sc.traj.p0.x, sc.traj.p0.y, sc.traj.p0.phi}},
                     {"pf", {sc.traj.pf.x, sc.traj.pf.y, sc.traj.pf.phi}},
                     {"duration", sc.traj.T}};
  j["gains"] = {{"M", to_json(sc.gains.M)},       {"B_c", to_json(sc.gains.B_c)},
                {"K_c", to_json(sc.gains.K_c)},   {"B_bar", to_json(sc.gains.B_bar)},
                {"K_bar", to_json(sc.gains.K_bar)},{"Lambda", to_json(sc.gains.Lambda)},
                {"K_d", to_json(sc.gains.K_d)}};
  j["sim"] = {{"dt", sc.sim.dt},
              {"storage",
               {{"mode", sc.sim.storage_mode == StorageMode::Constant ? "constant"
                                                                      : "ultracap"},
                {"volts", sc.sim.vs0},
                {"capacitance", sc.sim.capacitance}}},
              {"eps_f", sc.sim.eps_f},
              {"baumgarte", {sc.sim.baumgarte_alpha, sc.sim.baumgarte_beta}},
              {"saturation_duty_tol", sc.sim.saturation_duty_tol}};
  return j;
}

inline VectorXd gain_vector(const json& g, const char* key, int n, double fallback) {
  if (!g.contains(key)) return VectorXd::Constant(n, fallback);
  const json& v = g.at(key);
  if (v.is_number()) return VectorXd::Constant(n, v.get<double>());
  VectorXd out = vec_from_json(v);
  if (out.size() != n)
    throw ConfigError(std::string("gains.") + key + ": expected " + std::to_string(n) +
                      " entries, got " + std::to_string(out.size()));
  return out;
}

inline ScenarioConfig scenario_from_json(const json& j) {
  ScenarioConfig cfg;
  Scenario& sc = cfg.scenario;
  if (j.value("schema_version", 1) != 1)
    throw ConfigError("unsupported schema_version");
  sc.seed = j.value("seed", 1);

  if (!j.contains("robots") || j["robots"].size() < 2)
    throw ConfigError("at least two robots required");
  for (const auto& rj : j["robots"]) {
    sc.robots.push_back(robot_from_json(rj));
    const std::string br = rj.value("ik_branch", sc.robots.size() == 1
                                                     ? "elbow_down"
                                                     : "elbow_up");
    if (br != "elbow_up" && br != "elbow_down")
      throw ConfigError("ik_branch must be elbow_up or elbow_down");
    sc.branches.push_back(br == "elbow_up" ? IkBranch::ElbowUp : IkBranch::ElbowDown);
  }

  const json& lj = j.at("load");
  sc.load.mass = lj.at("mass");
  if (sc.load.mass <= 0.0) throw ConfigError("load mass must be positive");
  sc.load.inertia = lj.value("inertia", sc.load.mass * 0.5 * 0.5 / 12.0);
  if (sc.load.inertia <= 0.0) throw ConfigError("load inertia must be positive");
  if (lj.contains("gravity"))
    sc.load.gravity = Vector2d(lj["gravity"][0], lj["gravity"][1]);
  for (const auto& r : lj.at("grasp_offsets"))
    sc.load.grasp.r.push_back(Vector2d(r[0], r[1]));
  if (sc.load.grasp.r.size() != sc.robots.size())
    throw ConfigError("one grasp offset per robot required");
  for (const auto& r : sc.robots)
    sc.load.grasp.base_positions.push_back(r.base_pose.position());
  if (lj.contains("delta_R"))
    sc.load.grasp.delta_R = lj["delta_R"].get<std::vector<double>>();
  else
    sc.load.grasp.delta_R.assign(sc.robots.size() * (sc.robots.size() - 1) / 2, 0.0);

  const json& tj = j.at("trajectory");
  sc.traj.p0 = PlanarPose(tj.at("p0")[0], tj.at("p0")[1], tj.at("p0")[2]);
  sc.traj.pf = PlanarPose(tj.at("pf")[0], tj.at("pf")[1], tj.at("pf")[2]);
  sc.traj.T = tj.at("duration");
  if (sc.traj.T <= 0.0) throw ConfigError("trajectory duration must be positive");

  const int nq = sc.joints();
  const json g = j.value("gains", json::object());
  sc.gains.M = gain_vector(g, "M", nq, 18.0);
  sc.gains.B_c = gain_vector(g, "B_c", nq, 197.5);
  sc.gains.K_c = gain_vector(g, "K_c", nq, 825.0);
  sc.gains.B_bar = gain_vector(g, "B_bar", nq, 0.0);
  sc.gains.K_bar = gain_vector(g, "K_bar", nq, 0.0);
  sc.gains.Lambda = gain_vector(g, "Lambda", nq, 20.0);
  sc.gains.K_d = gain_vector(g, "K_d", nq, 30.0);
  if (sc.gains.M.minCoeff() <= 0.0 || sc.gains.Lambda.minCoeff() <= 0.0 ||
      sc.gains.K_d.minCoeff() <= 0.0)
    throw ConfigError("M, Lambda, K_d must be positive definite");
  if ((sc.gains.B_c + sc.gains.B_bar).minCoeff() <= 0.0 ||
      (sc.gains.K_c + sc.gains.K_bar).minCoeff() <= 0.0)
    throw ConfigError("B and K must be positive definite");
  cfg.schedule_file = g.value("schedule_file", "");

  if (j.contains("sim")) {
    const json& s = j["sim"];
    sc.sim.dt = s.value("dt", 1e-4);
    if (sc.sim.dt <= 0.0) throw ConfigError("sim.dt must be positive");
    sc.sim.eps_f = s.value("eps_f", 0.005);
    sc.sim.saturation_duty_tol = s.value("saturation_duty_tol", 0.01);
    sc.sim.drift_tol = s.value("drift_tol", 1e-6);
    if (s.contains("baumgarte")) {
      sc.sim.baumgarte_alpha = s["baumgarte"][0];
      sc.sim.baumgarte_beta = s["baumgarte"][1];
    }
    if (s.contains("storage")) {
      const std::string mode = s["storage"].value("mode", "constant");
      if (mode == "constant")
        sc.sim.storage_mode = StorageMode::Constant;
      else if (mode == "ultracap")
        sc.sim.storage_mode = StorageMode::Ultracap;
      else
        throw ConfigError("storage mode must be constant or ultracap");
      sc.sim.vs0 = s["storage"].value("volts", 48.0);
      sc.sim.capacitance = s["storage"].value("capacitance", 10.0);
      if (sc.sim.vs0 <= 0.0) throw ConfigError("storage volts must be positive");
    }
  }

  // Both trajectory endpoints must be reachable for every arm.
  for (double t : {0.0, sc.traj.T}) {
    const TrajectoryPoint ref = quintic_trajectory(sc.traj.p0, sc.traj.pf, sc.traj.T, t);
    for (int i = 0; i < sc.n_robots(); ++i) {
      const TrajectoryPoint ee = load_to_ee_reference(ref, sc.load.grasp.r[i]);
      try {
        inverse_kinematics(sc.robots[i], ee.pose, sc.branches[i]);
      } catch (const NoSolutionError& e) {
        throw ConfigError("trajectory endpoint unreachable for robot " +
                          std::to_string(i + 1) + ": " + e.what());
      }
    }
  }

  if (j.contains("ga")) {
    cfg.ga = ga_from_json(j["ga"]);
    cfg.has_ga = true;
  }
  return cfg;
}

inline ScenarioConfig load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  try {
    return scenario_from_json(j);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Gain schedule file: CSV with columns t, B-bar per joint, K-bar per joint.
// ---------------------------------------------------------------------------

inline GainSchedule load_schedule_file(const std::string& path, int n_joints) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open schedule file: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<double> row;
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (...) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (first) { first = false; continue; }  // header row
      throw ConfigError(path + ": non-numeric row");
    }
    first = false;
    if (static_cast<int>(row.size()) != 1 + 2 * n_joints)
      throw ConfigError(path + ": expected " + std::to_string(1 + 2 * n_joints) +
                        " columns, got " + std::to_string(row.size()));
    rows.push_back(row);
  }
  if (rows.size() < 1) throw ConfigError(path + ": empty schedule");
  GainSchedule s;
  s.times.resize(rows.size());
  s.b_bar.resize(rows.size(), n_joints);
  s.k_bar.resize(rows.size(), n_joints);
  for (size_t r = 0; r < rows.size(); ++r) {
    s.times(r) = rows[r][0];
    if (r > 0 && s.times(r) <= s.times(r - 1))
      throw ConfigError(path + ": times must be strictly increasing");
    for (int c = 0; c < n_joints; ++c) {
      s.b_bar(r, c) = rows[r][1 + c];
      s.k_bar(r, c) = rows[r][1 + n_joints + c];
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Result export
// ---------------------------------------------------------------------------

inline void write_csv_row(std::ofstream& f, const std::vector<double>& vals) {
  char buf[32];
  for (size_t i = 0; i < vals.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.12e", vals[i]);
    f << (i ? "," : "") << buf;
  }
  f << "\n";
}

inline void write_timeseries_csv(const std::string& path, const Scenario& sc,
                                 const RolloutResult& res) {
  std::ofstream f(path, std::ios::binary);  // LF line endings everywhere
  if (!f) throw ConfigError("cannot write " + path);
  f << "t";
  auto cols = [&](const char* name) {
    for (int i = 0; i < sc.n_robots(); ++i)
      for (int j = 0; j < 3; ++j) f << "," << name << "_" << (i + 1) << (j + 1);
  };
  cols("q");
  cols("qd");
  cols("u");
  cols("tauv");
  cols("p");
  f << ",dEs,drift\n";
  for (const auto& row : res.trace) {
    std::vector<double> vals;
    vals.push_back(row.t);
    auto push = [&](const VectorXd& v) {
      for (int i = 0; i < v.size(); ++i) vals.push_back(v(i));
    };
    push(row.q);
    push(row.qd);
    push(row.u);
    push(row.tau_v);
    push(row.power);
    vals.push_back(row.dEs_cum);
    vals.push_back(row.drift);
    write_csv_row(f, vals);
  }
}

inline json ledger_to_json(const EnergyLedger& lg) {
  return json{{"dE_s", lg.dE_s},
              {"dE_R", lg.dE_r()},
              {"W_ext", lg.W_ext},
              {"dE_m_tot", lg.dE_m_tot},
              {"dE_m_load", lg.dE_m_load},
              {"sigma_m_tot", lg.sigma_m_tot},
              {"sigma_e", lg.sigma_e},
              {"dE_NR", lg.dE_nr},
              {"closure_residual", lg.closure_residual()}};
}

inline json sankey_to_json(const std::vector<EnergyFlow>& flows) {
  json arr = json::array();
  for (const auto& fl : flows)
    arr.push_back({{"source", fl.source}, {"sink", fl.sink}, {"joules", fl.joules}});
  return json{{"flows", arr}, {"balance", sankey_balance(flows)}};
}

}  // namespace crmsim
