#pragma once

// Simulated annealing for bounded continuous minimisation after Corana,
// Marchesi, Martini and Ridella (ACM TOMS 13(3), 1987).
//
// One temperature level runs cycles_per_temperature step adjustments; each
// adjustment follows steps_per_cycle sweeps in which every coordinate gets
// one trial move x_h + r * v_h, r ~ U[-1, 1]. Trial values outside the
// bounds are redrawn uniformly inside them. Moves are accepted by the
// Metropolis rule. After each cycle the step vector is rescaled towards a
// 50% acceptance ratio; after each level the temperature is reduced and the
// walk restarts from the best point found. The run stops when the level
// results of the last `termination_levels` levels and the best value agree
// to termination_epsilon, or when max_evaluations is reached.

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace fluoro {

struct AnnealConfig {
  /// 0 selects |f(x0)| (or 1 if that is zero).
  double initial_temperature = 0.0;
  double temperature_reduction = 0.85;
  int steps_per_cycle = 20;
  int cycles_per_temperature = 5;
  double step_adjust_factor = 2.0;
  /// Per-dimension initial step; empty selects half the bound width.
  std::vector<double> initial_step;
  double termination_epsilon = 1e-4;
  int termination_levels = 4;
  long max_evaluations = 20000;
  std::uint64_t seed = 0;
  bool record_trace = true;

  void validate(Eigen::Index dims) const;
};

struct Bounds {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  static Bounds symmetric(const Eigen::VectorXd& center, const Eigen::VectorXd& half_width);
  bool contains(const Eigen::VectorXd& x) const;
};

struct TraceEntry {
  long evaluation;
  Eigen::VectorXd candidate;
  double score;
  bool accepted;
  double temperature;
};

struct AnnealResult {
  Eigen::VectorXd x_best;
  double score_best;
  long evaluations;
  int temperature_levels;
  std::vector<TraceEntry> trace;
};

using Objective = std::function<double(const Eigen::VectorXd&)>;

/// Minimises `objective`. Deterministic given cfg.seed.
AnnealResult anneal(const Objective& objective, const Eigen::VectorXd& x0, const Bounds& bounds,
                    const AnnealConfig& cfg = {});

/// Columns: eval, x0..x{n-1}, score, accepted, temperature.
std::string trace_csv(const std::vector<TraceEntry>& trace);
void write_trace_csv(const std::vector<TraceEntry>& trace, const std::filesystem::path& path);

}  // namespace fluoro
