// Command-line front end: closed-chain maneuver simulation, gain-offset
// optimization, and passivity certification of gain schedules.
#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "crmsim/optimize.hpp"

namespace fs = std::filesystem;
using namespace crmsim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitInfeasible = 4;
constexpr int kExitNotPassive = 5;

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << j.dump(2) << "\n";
}

ScenarioConfig load_config(const std::string& path, std::uint64_t seed_override,
                           bool has_seed, double dt_override) {
  ScenarioConfig cfg = load_scenario_file(path);
  if (has_seed) cfg.scenario.seed = seed_override;
  if (dt_override > 0.0) cfg.scenario.sim.dt = dt_override;
  if (!cfg.schedule_file.empty()) {
    fs::path sp(cfg.schedule_file);
    if (sp.is_relative()) sp = fs::path(path).parent_path() / sp;
    cfg.scenario.gains.schedule =
        load_schedule_file(sp.string(), cfg.scenario.joints());
  }
  return cfg;
}

int run_sim(const std::string& cfg_path, const std::string& out_dir,
            std::uint64_t seed, bool has_seed, double dt) {
  const ScenarioConfig cfg = load_config(cfg_path, seed, has_seed, dt);
  fs::create_directories(out_dir);
  RolloutResult res;
  try {
    res = rollout(cfg.scenario);
  } catch (const StorageDepletedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDiverged;
  }
  if (res.metrics.diverged) {
    std::cerr << "error: integration diverged at t = " << res.metrics.diverged_at
              << " s\n";
    return kExitDiverged;
  }

  write_timeseries_csv((fs::path(out_dir) / "timeseries.csv").string(), cfg.scenario,
                       res);
  json ledger = ledger_to_json(res.ledger);
  ledger["metrics"] = {{"final_pos_error", res.metrics.final_pos_error},
                       {"in_terminal_set", res.metrics.in_is_set},
                       {"max_joint_error", res.metrics.max_joint_error},
                       {"max_drift", res.metrics.max_drift},
                       {"saturation_duty", res.metrics.saturation_duty}};
  if (res.ledger.dE_nr > 0.0)
    ledger["effectiveness"] = effectiveness(res.ledger.dE_r(), res.ledger.dE_nr);
  write_json_file(fs::path(out_dir) / "ledger.json", ledger);
  write_json_file(fs::path(out_dir) / "sankey.json",
                  sankey_to_json(sankey_export(res.ledger)));

  std::cout << "dE_R = " << res.ledger.dE_r() << " J, dE_NR = " << res.ledger.dE_nr
            << " J, closure residual = " << res.ledger.closure_residual() << " J\n";
  return kExitOk;
}

int run_opt(const std::string& cfg_path, const std::string& out_dir,
            std::uint64_t seed, bool has_seed) {
  ScenarioConfig cfg = load_config(cfg_path, seed, has_seed, 0.0);
  if (!cfg.has_ga)
    throw ConfigError(cfg_path + ": missing \"ga\" section");
  fs::create_directories(out_dir);
  const GaResult res = ga_run(cfg.scenario, cfg.ga);
  write_json_file(fs::path(out_dir) / "optimization_report.json",
                  ga_report(res, cfg.ga));
  if (!res.best.feasible) {
    std::cerr << "error: no feasible candidate found (best violation "
              << res.best.violation << ")\n";
    return kExitInfeasible;
  }
  std::cout << "best dE_s = " << res.best.fitness
            << " J, effectiveness = " << res.best.effectiveness << " after "
            << res.evaluations << " evaluations\n";
  return kExitOk;
}

int run_audit(const std::string& schedule_path, const std::string& gains_cfg,
              const std::string& out_csv) {
  const ScenarioConfig cfg = load_scenario_file(gains_cfg);
  const Scenario& sc = cfg.scenario;
  const GainSchedule sched = load_schedule_file(schedule_path, sc.joints());

  ImpedanceGains gains = sc.gains;
  gains.schedule = sched;

  const double t0 = sched.times(0);
  const double t1 = sched.times(sched.times.size() - 1);
  const int samples = 2001;

  std::ofstream csv;
  std::ostream* outp = &std::cout;
  if (!out_csv.empty()) {
    csv.open(out_csv, std::ios::binary);
    if (!csv) throw ConfigError("cannot write " + out_csv);
    outp = &csv;
  }
  *outp << "t,lambda_bar,lambda_B_min,margin,regime\n";

  bool certified = true;
  double first_violation = 0.0;
  char buf[32];
  for (int k = 0; k < samples; ++k) {
    const double t = t0 + (t1 - t0) * k / (samples - 1.0);
    const PassivityReport rep =
        passivity_check(gains.B(t), gains.K(t), gains.B_dot(t), gains.K_dot(t), gains.M);
    auto num = [&](double v) {
      std::snprintf(buf, sizeof(buf), "%.12e", v);
      return std::string(buf);
    };
    *outp << num(t) << "," << num(rep.lambda_bar) << "," << num(rep.lambda_B_min) << ","
          << num(rep.margin) << "," << regime_name(rep.regime) << "\n";
    if (!rep.passive() && certified) {
      certified = false;
      first_violation = t;
    }
  }
  if (certified) {
    std::cout << "CERTIFIED: schedule satisfies the passivity condition on ["
              << t0 << ", " << t1 << "] s\n";
    return kExitOk;
  }
  std::cout << "NOT CERTIFIED: first violation at t = " << first_violation << " s\n";
  return kExitNotPassive;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cooperative-manipulator regenerative maneuver toolkit"};
  app.require_subcommand(1);

  std::string cfg_path, out_dir = "out", schedule_path, gains_cfg, audit_csv;
  std::uint64_t seed = 0;
  double dt = 0.0;

  CLI::App* sim = app.add_subcommand("sim", "Simulate a maneuver");
  sim->add_option("config", cfg_path, "scenario JSON file")->required();
  sim->add_option("-o,--out", out_dir, "output directory");
  CLI::Option* sim_seed = sim->add_option("--seed", seed, "RNG seed override");
  sim->add_option("--dt", dt, "integration step override, seconds");

  CLI::App* opt = app.add_subcommand("opt", "Optimize gain offsets");
  opt->add_option("config", cfg_path, "scenario JSON file with a ga section")
      ->required();
  opt->add_option("-o,--out", out_dir, "output directory");
  CLI::Option* opt_seed = opt->add_option("--seed", seed, "RNG seed override");

  CLI::App* audit = app.add_subcommand("audit", "Certify a gain schedule");
  audit->add_option("schedule", schedule_path, "gain schedule CSV")->required();
  audit->add_option("--gains", gains_cfg, "scenario JSON providing fixed gains")
      ->required();
  audit->add_option("-o,--out", audit_csv, "per-sample CSV path (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return run_sim(cfg_path, out_dir, seed, sim_seed->count() > 0, dt);
    if (opt->parsed()) return run_opt(cfg_path, out_dir, seed, opt_seed->count() > 0);
    return run_audit(schedule_path, gains_cfg, audit_csv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InvalidGainsError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IntegrationDivergedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}
