#pragma once

#include <random>

#include "crmsim/scenario_io.hpp"

namespace crmsim {

// ---------------------------------------------------------------------------
// Fitness evaluation
// ---------------------------------------------------------------------------

/// Genome layout: [B-bar joints..., K-bar joints...] in full mode, or
/// [B-bar, K-bar] scalars applied to every joint in tied mode.
struct Candidate {
  VectorXd genes;
  double fitness = -std::numeric_limits<double>::infinity();
  bool feasible = false;
  double violation = std::numeric_limits<double>::infinity();
  double effectiveness = 0.0;
};

inline int genome_size(const Scenario& sc, const GaConfig& cfg) {
  return cfg.tied_gains ? 2 : 2 * sc.joints();
}

inline void apply_genes(Scenario& sc, const GaConfig& cfg, const VectorXd& genes) {
  const int nq = sc.joints();
  if (cfg.tied_gains) {
    sc.gains.B_bar = VectorXd::Constant(nq, genes(0));
    sc.gains.K_bar = VectorXd::Constant(nq, genes(1));
  } else {
    sc.gains.B_bar = genes.head(nq);
    sc.gains.K_bar = genes.tail(nq);
  }
}

/// Rollout with the candidate's gain offsets; fitness is the net energy
/// returned to storage, dE_s = -dE_R. Candidates that diverge, exit the
/// terminal set, breach the converter duty budget, or drift out of the grasp
/// tolerance are infeasible and carry a violation magnitude for ranking.
inline Candidate evaluate_candidate(const Scenario& base, const GaConfig& cfg,
                                    const VectorXd& genes) {
  Candidate c;
  c.genes = genes;
  Scenario sc = base;
  apply_genes(sc, cfg, genes);
  if (cfg.dt_override > 0.0) sc.sim.dt = cfg.dt_override;
  if ((sc.gains.B_c + sc.gains.B_bar).minCoeff() <= 0.0 ||
      (sc.gains.K_c + sc.gains.K_bar).minCoeff() <= 0.0) {
    c.violation = 1e6;
    return c;
  }

  RolloutResult res;
  try {
    res = rollout(sc, /*record_trace=*/false);
  } catch (const StorageDepletedError&) {
    c.violation = 1e6;
    return c;
  } catch (const DomainError&) {
    c.violation = 1e6;
    return c;
  }

  double viol = 0.0;
  if (res.metrics.diverged) viol += 1e3;
  if (!res.metrics.in_is_set)
    viol += res.metrics.final_pos_error - sc.sim.eps_f;
  if (res.metrics.saturation_duty > sc.sim.saturation_duty_tol)
    viol += res.metrics.saturation_duty - sc.sim.saturation_duty_tol;
  if (res.metrics.max_drift > sc.sim.drift_tol)
    viol += res.metrics.max_drift / sc.sim.drift_tol - 1.0;

  c.violation = viol;
  c.feasible = viol == 0.0;
  if (c.feasible) {
    c.fitness = res.ledger.dE_s;
    if (res.ledger.dE_nr > 0.0)
      c.effectiveness = effectiveness(res.ledger.dE_r(), res.ledger.dE_nr);
  }
  return c;
}

// ---------------------------------------------------------------------------
// Real-coded genetic algorithm
// ---------------------------------------------------------------------------

struct GaGeneration {
  double best_fitness;
  double mean_fitness;  // over feasible members
  int feasible_count;
};

struct GaResult {
  Candidate best;
  std::vector<GaGeneration> history;
  int evaluations = 0;
};

namespace detail {

inline void gene_box(const GaConfig& cfg, int gene, int n_b_genes, double& lb,
                     double& ub) {
  if (gene < n_b_genes) {
    lb = cfg.bounds.lb_b;
    ub = cfg.bounds.ub_b;
  } else {
    lb = cfg.bounds.lb_k;
    ub = cfg.bounds.ub_k;
  }
}

/// Feasible beats infeasible; feasible by fitness, infeasible by violation.
inline bool better(const Candidate& a, const Candidate& b) {
  if (a.feasible != b.feasible) return a.feasible;
  return a.feasible ? a.fitness > b.fitness : a.violation < b.violation;
}

}  // namespace detail

/// Tournament selection (size 2), blend crossover, Gaussian per-gene mutation
/// with sigma at 10% of the box width, single-elite survival. Deterministic
/// for a fixed seed.
inline GaResult ga_run(const Scenario& base, const GaConfig& cfg) {
  std::mt19937_64 rng(base.seed);
  const int ng = genome_size(base, cfg);
  const int n_b = cfg.tied_gains ? 1 : base.joints();
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  auto random_genome = [&]() {
    VectorXd g(ng);
    for (int i = 0; i < ng; ++i) {
      double lb, ub;
      detail::gene_box(cfg, i, n_b, lb, ub);
      g(i) = lb + (ub - lb) * unit(rng);
    }
    return g;
  };

  GaResult res;
  std::vector<Candidate> pop(cfg.population);
  // Seed one member at the zero offset so the default gains are always in
  // the initial population.
  pop[0] = evaluate_candidate(base, cfg, VectorXd::Zero(ng));
  for (int i = 1; i < cfg.population; ++i)
    pop[i] = evaluate_candidate(base, cfg, random_genome());
  res.evaluations = cfg.population;

  auto best_of = [&](const std::vector<Candidate>& v) {
    int b = 0;
    for (size_t i = 1; i < v.size(); ++i)
      if (detail::better(v[i], v[b])) b = static_cast<int>(i);
    return b;
  };

  auto tournament = [&]() -> const Candidate& {
    std::uniform_int_distribution<int> pick(0, cfg.population - 1);
    const Candidate& a = pop[pick(rng)];
    const Candidate& b = pop[pick(rng)];
    return detail::better(a, b) ? a : b;
  };

  for (int gen = 0; gen < cfg.max_generations; ++gen) {
    GaGeneration stat{-std::numeric_limits<double>::infinity(), 0.0, 0};
    for (const Candidate& c : pop) {
      if (!c.feasible) continue;
      ++stat.feasible_count;
      stat.mean_fitness += c.fitness;
      stat.best_fitness = std::max(stat.best_fitness, c.fitness);
    }
    if (stat.feasible_count > 0) stat.mean_fitness /= stat.feasible_count;
    res.history.push_back(stat);

    std::vector<Candidate> next;
    next.reserve(cfg.population);
    for (int e = 0; e < cfg.elitism && e < cfg.population; ++e)
      next.push_back(pop[best_of(pop)]);

    while (static_cast<int>(next.size()) < cfg.population) {
      VectorXd child = tournament().genes;
      if (unit(rng) < cfg.crossover_prob) {
        const VectorXd other = tournament().genes;
        const double w = unit(rng);
        child = w * child + (1.0 - w) * other;
      }
      for (int i = 0; i < ng; ++i) {
        if (unit(rng) >= cfg.mutation_rate) continue;
        double lb, ub;
        detail::gene_box(cfg, i, n_b, lb, ub);
        std::normal_distribution<double> bump(0.0, 0.1 * (ub - lb));
        child(i) = std::clamp(child(i) + bump(rng), lb, ub);
      }
      next.push_back(evaluate_candidate(base, cfg, child));
      ++res.evaluations;
    }
    pop = std::move(next);
  }

  res.best = pop[best_of(pop)];
  if (!res.best.feasible) {
    GaGeneration stat{-std::numeric_limits<double>::infinity(), 0.0, 0};
    res.history.push_back(stat);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Exhaustive grid reference for low-dimensional searches
// ---------------------------------------------------------------------------

struct GridResult {
  Candidate best;
  double fitness_min = std::numeric_limits<double>::infinity();
  double fitness_max = -std::numeric_limits<double>::infinity();
  int feasible_count = 0;
};

/// Dense grid over the (B-bar, K-bar) boxes. Only defined for the tied-gains
/// parameterization (two free variables); refuses higher dimensions.
inline GridResult grid_search(const Scenario& base, const GaConfig& cfg,
                              int points_per_axis) {
  if (!cfg.tied_gains)
    throw DomainError("grid_search: only the 2-variable tied-gains mode is supported");
  if (points_per_axis < 2) throw DomainError("grid_search: need >= 2 points per axis");
  GridResult res;
  VectorXd g(2);
  for (int ib = 0; ib < points_per_axis; ++ib) {
    for (int ik = 0; ik < points_per_axis; ++ik) {
      g(0) = cfg.bounds.lb_b +
             (cfg.bounds.ub_b - cfg.bounds.lb_b) * ib / (points_per_axis - 1.0);
      g(1) = cfg.bounds.lb_k +
             (cfg.bounds.ub_k - cfg.bounds.lb_k) * ik / (points_per_axis - 1.0);
      const Candidate c = evaluate_candidate(base, cfg, g);
      if (c.feasible) {
        ++res.feasible_count;
        res.fitness_min = std::min(res.fitness_min, c.fitness);
        res.fitness_max = std::max(res.fitness_max, c.fitness);
      }
      if (detail::better(c, res.best)) res.best = c;
    }
  }
  return res;
}

inline json ga_report(const GaResult& res, const GaConfig& cfg) {
  json gens = json::array();
  for (const auto& g : res.history)
    gens.push_back({{"best", g.best_fitness},
                    {"mean", g.mean_fitness},
                    {"feasible", g.feasible_count}});
  return json{{"config", to_json(cfg)},
              {"evaluations", res.evaluations},
              {"best",
               {{"genes", to_json(res.best.genes)},
                {"fitness", res.best.fitness},
                {"feasible", res.best.feasible},
                {"violation", res.best.violation},
                {"effectiveness", res.best.effectiveness}}},
              {"generations", gens}};
}

}  // namespace crmsim
