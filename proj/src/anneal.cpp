#include "fluoro/anneal.hpp"

#include "fluoro/io.hpp"
#include "fluoro/random.hpp"

#include <cmath>
#include <deque>
#include <sstream>
#include <stdexcept>

namespace fluoro {

void AnnealConfig::validate(Eigen::Index dims) const {
  if (initial_temperature < 0) throw std::invalid_argument("initial_temperature must be positive");
  if (!(temperature_reduction > 0 && temperature_reduction < 1))
    throw std::invalid_argument("temperature_reduction must lie in (0, 1)");
  if (steps_per_cycle < 1 || cycles_per_temperature < 1)
    throw std::invalid_argument("steps_per_cycle and cycles_per_temperature must be positive");
  if (!(step_adjust_factor > 1)) throw std::invalid_argument("step_adjust_factor must exceed 1");
  if (!initial_step.empty()) {
    if (static_cast<Eigen::Index>(initial_step.size()) != dims)
      throw std::invalid_argument("initial_step has the wrong dimension");
    for (double v : initial_step)
      if (!(v > 0)) throw std::invalid_argument("initial_step entries must be positive");
  }
  if (!(termination_epsilon > 0)) throw std::invalid_argument("termination_epsilon must be positive");
  if (termination_levels < 1) throw std::invalid_argument("termination_levels must be positive");
  if (max_evaluations < 1) throw std::invalid_argument("max_evaluations must be positive");
}

Bounds Bounds::symmetric(const Eigen::VectorXd& center, const Eigen::VectorXd& half_width) {
  return {center - half_width, center + half_width};
}

bool Bounds::contains(const Eigen::VectorXd& x) const {
  return x.size() == lower.size() && (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
}

AnnealResult anneal(const Objective& objective, const Eigen::VectorXd& x0, const Bounds& bounds,
                    const AnnealConfig& cfg) {
  const Eigen::Index n = x0.size();
  if (n == 0) throw std::invalid_argument("anneal: empty parameter vector");
  if (bounds.lower.size() != n || bounds.upper.size() != n) throw std::invalid_argument("anneal: bounds dimension");
  if (!(bounds.lower.array() < bounds.upper.array()).all()) throw std::invalid_argument("anneal: bounds need lo < hi");
  if (!bounds.contains(x0)) throw std::invalid_argument("anneal: x0 is outside the bounds");
  cfg.validate(n);

  Rng rng(cfg.seed);
  AnnealResult result;
  const Eigen::VectorXd width = bounds.upper - bounds.lower;

  Eigen::VectorXd x = x0;
  double f = objective(x);
  if (!std::isfinite(f)) throw std::invalid_argument("anneal: objective is not finite at x0");
  long evals = 1;
  double temperature = cfg.initial_temperature > 0 ? cfg.initial_temperature : (f != 0 ? std::abs(f) : 1.0);
  if (cfg.record_trace) result.trace.push_back({0, x, f, true, temperature});

  Eigen::VectorXd step(n);
  for (Eigen::Index h = 0; h < n; ++h)
    step[h] = cfg.initial_step.empty() ? 0.5 * width[h] : std::min(cfg.initial_step[static_cast<std::size_t>(h)], width[h]);

  Eigen::VectorXd x_opt = x;
  double f_opt = f;
  std::deque<double> level_values(static_cast<std::size_t>(cfg.termination_levels), f);
  Eigen::VectorXi accepted_count = Eigen::VectorXi::Zero(n);
  int levels = 0;
  bool budget_left = true;

  while (budget_left) {
    for (int m = 0; m < cfg.cycles_per_temperature && budget_left; ++m) {
      for (int j = 0; j < cfg.steps_per_cycle && budget_left; ++j) {
        for (Eigen::Index h = 0; h < n; ++h) {
          if (evals >= cfg.max_evaluations) {
            budget_left = false;
            break;
          }
          Eigen::VectorXd trial = x;
          trial[h] = x[h] + rng.uniform(-1.0, 1.0) * step[h];
          if (trial[h] < bounds.lower[h] || trial[h] > bounds.upper[h])
            trial[h] = bounds.lower[h] + rng.uniform() * width[h];
          const double ft = objective(trial);
          const long eval_index = evals++;
          bool accept = false;
          if (std::isfinite(ft)) {
            if (ft <= f) {
              accept = true;
            } else {
              const double p = std::exp(-(ft - f) / temperature);
              accept = rng.uniform() < p;
            }
          }
          if (accept) {
            x = trial;
            f = ft;
            ++accepted_count[h];
            if (f < f_opt) {
              x_opt = x;
              f_opt = f;
            }
          }
          if (cfg.record_trace) result.trace.push_back({eval_index, std::move(trial), ft, accept, temperature});
        }
      }
      if (!budget_left) break;
      // Step adjustment towards a 50% acceptance ratio.
      for (Eigen::Index h = 0; h < n; ++h) {
        const double ratio = static_cast<double>(accepted_count[h]) / cfg.steps_per_cycle;
        if (ratio > 0.6)
          step[h] *= 1.0 + cfg.step_adjust_factor * (ratio - 0.6) / 0.4;
        else if (ratio < 0.4)
          step[h] /= 1.0 + cfg.step_adjust_factor * (0.4 - ratio) / 0.4;
        step[h] = std::min(step[h], width[h]);
      }
      accepted_count.setZero();
    }
    if (!budget_left) break;
    ++levels;

    level_values.push_front(f);
    level_values.pop_back();
    bool converged = f - f_opt <= cfg.termination_epsilon;
    for (std::size_t u = 1; u < level_values.size() && converged; ++u)
      converged = std::abs(level_values[0] - level_values[u]) <= cfg.termination_epsilon;
    if (converged) break;

    temperature *= cfg.temperature_reduction;
    x = x_opt;
    f = f_opt;
  }

  result.x_best = x_opt;
  result.score_best = f_opt;
  result.evaluations = evals;
  result.temperature_levels = levels;
  return result;
}

std::string trace_csv(const std::vector<TraceEntry>& trace) {
  std::ostringstream os;
  os.precision(17);
  const Eigen::Index n = trace.empty() ? 0 : trace.front().candidate.size();
  os << "eval";
  for (Eigen::Index i = 0; i < n; ++i) os << ",x" << i;
  os << ",score,accepted,temperature\n";
  for (const auto& e : trace) {
    os << e.evaluation;
    for (Eigen::Index i = 0; i < n; ++i) os << ',' << e.candidate[i];
    os << ',' << e.score << ',' << (e.accepted ? 1 : 0) << ',' << e.temperature << '\n';
  }
  return os.str();
}

void write_trace_csv(const std::vector<TraceEntry>& trace, const std::filesystem::path& path) {
  write_text(trace_csv(trace), path);
}

}  // namespace fluoro
