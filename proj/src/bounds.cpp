#include "mixbell/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mixbell {

namespace {

double square(double x) { return x * x; }

/// Coefficient on the variance part: ((1-l) / (1-l + l/b_u))^2.
double variance_coefficient(double lambda, double beta_upper) {
  if (lambda == 1.0) return 0.0;
  const double base = (1.0 - lambda) / (1.0 - lambda + lambda / beta_upper);
  return square(base);
}

/// Coefficient on the gap part: (l / ((1-l) b_l + l))^2.
double gap_coefficient(double lambda, double beta_lower) {
  if (lambda == 0.0) return 0.0;
  const double base = lambda / ((1.0 - lambda) * beta_lower + lambda);
  return square(base);
}

}  // namespace

double dynamics_gap(const QTable& q, const TabularMdp& target, const TabularMdp& source,
                    const OperatorMode& mode) {
  if (target.num_states != source.num_states || target.num_actions != source.num_actions) {
    throw std::invalid_argument("dynamics_gap: domain shapes differ");
  }
  const QTable bt = exact_backup(target, q, mode);
  const QTable bs = exact_backup(source, q, mode);
  return square(sup_norm_diff(bt, bs));
}

double backup_variance(const QTable& q, const TabularMdp& mdp, int s, int a,
                       const OperatorMode& mode) {
  double mean = 0.0;
  for (int sp = 0; sp < mdp.num_states; ++sp) {
    mean += mdp.transition_at(s, a, sp) * next_state_value(q, sp, mode);
  }
  double var = 0.0;
  for (int sp = 0; sp < mdp.num_states; ++sp) {
    const double dv = next_state_value(q, sp, mode) - mean;
    var += mdp.transition_at(s, a, sp) * dv * dv;
  }
  return square(mdp.discount) * var;
}

double worst_case_normalized_variance(const QTable& q, const TabularMdp& mdp,
                                      const OperatorMode& mode) {
  double worst = 0.0;
  for (int s = 0; s < mdp.num_states; ++s) {
    for (int a = 0; a < mdp.num_actions; ++a) {
      worst = std::max(worst, backup_variance(q, mdp, s, a, mode));
    }
  }
  return worst;
}

double realized_normalized_variance(const QTable& q, const TabularMdp& mdp,
                                    const std::vector<int>& counts, const OperatorMode& mode) {
  if (counts.size() != static_cast<std::size_t>(mdp.num_states) * mdp.num_actions) {
    throw std::invalid_argument("realized_normalized_variance: counts shape mismatch");
  }
  double worst = 0.0;
  for (int s = 0; s < mdp.num_states; ++s) {
    for (int a = 0; a < mdp.num_actions; ++a) {
      const int n_cell = counts[static_cast<std::size_t>(s) * mdp.num_actions + a];
      if (n_cell <= 0) {
        throw std::invalid_argument("realized_normalized_variance: uncovered cell");
      }
      worst = std::max(worst, backup_variance(q, mdp, s, a, mode) / n_cell);
    }
  }
  return worst;
}

double expected_bound(const BoundInputs& in) {
  return variance_coefficient(in.lambda, in.beta_upper) * in.variance_term +
         gap_coefficient(in.lambda, in.beta_lower) * in.gap;
}

double optimal_lambda_closed(double beta, double variance_term, double gap) {
  if (!(beta > 0.0)) throw std::invalid_argument("optimal_lambda_closed: beta must be positive");
  if (variance_term < 0.0 || gap < 0.0) {
    throw std::invalid_argument("optimal_lambda_closed: negative inputs");
  }
  const double numer = beta * beta * variance_term;
  const double denom = numer + beta * gap;
  if (denom == 0.0) {
    throw std::runtime_error(
        "optimal_lambda_closed: degenerate inputs, every weight is optimal");
  }
  return numer / denom;
}

double optimal_lambda_numeric(const BoundInputs& in, double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("optimal_lambda_numeric: tol must be positive");
  const auto objective = [&in](double lambda) {
    BoundInputs probe = in;
    probe.lambda = lambda;
    return expected_bound(probe);
  };

  // Grid scan to bracket the minimum.
  constexpr int kGridPoints = 1001;
  int best = 0;
  double best_value = objective(0.0);
  for (int i = 1; i < kGridPoints; ++i) {
    const double lambda = static_cast<double>(i) / (kGridPoints - 1);
    const double value = objective(lambda);
    if (value < best_value) {
      best_value = value;
      best = i;
    }
  }
  double lo = static_cast<double>(std::max(0, best - 1)) / (kGridPoints - 1);
  double hi = static_cast<double>(std::min(kGridPoints - 1, best + 1)) / (kGridPoints - 1);

  // Golden-section refinement.
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - inv_phi * (hi - lo);
  double d = lo + inv_phi * (hi - lo);
  double fc = objective(c);
  double fd = objective(d);
  while (hi - lo > tol) {
    if (fc < fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - inv_phi * (hi - lo);
      fc = objective(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + inv_phi * (hi - lo);
      fd = objective(d);
    }
  }

  // Return the best point actually evaluated, including the endpoints, so
  // boundary minima are hit exactly.
  double arg = lo;
  double val = objective(lo);
  for (double cand : {c, d, hi}) {
    const double f = objective(cand);
    if (f < val) {
      val = f;
      arg = cand;
    }
  }
  return arg;
}

double worst_case_bound(const BoundInputs& in) {
  if (in.dataset_size <= 0) {
    throw std::invalid_argument("worst_case_bound: dataset size must be positive");
  }
  if (!(in.delta > 0.0 && in.delta < 1.0)) {
    throw std::invalid_argument("worst_case_bound: delta must lie in (0, 1)");
  }
  const double lambda = in.lambda;
  const double gamma = in.discount;
  const double b = in.reward_bound;
  const double denom = (1.0 - lambda) * square(in.beta_lower) + lambda * in.beta_lower;
  const double heavy = 8.0 * gamma * b * b / square(1.0 - gamma) * in.beta_upper *
                       square(1.0 - lambda) / denom;
  const double cross = 4.0 * gamma * b / (1.0 - gamma) * lambda * (1.0 - lambda) *
                       std::sqrt(in.gap) / denom;
  const double scale = std::sqrt(0.5 * std::log(1.0 / in.delta)) *
                       (static_cast<double>(in.num_states) * in.num_actions) /
                       std::sqrt(static_cast<double>(in.dataset_size));
  return expected_bound(in) + scale * (heavy + cross);
}

double convergence_bound(const ConvergenceInputs& in) {
  if (in.step < 0) throw std::invalid_argument("convergence_bound: step must be nonnegative");
  const double gamma = in.discount;
  const double decay = std::pow(gamma, in.step + 1);
  const double per_step =
      std::sqrt(variance_coefficient(in.lambda, in.beta_upper)) * in.sigma_max +
      std::sqrt(gap_coefficient(in.lambda, in.beta_lower)) * std::sqrt(in.gap_max);
  return decay * in.init_dist_term + (1.0 - decay) / (1.0 - gamma) * per_step;
}

double limit_neighborhood(double lambda, double beta_lower, double beta_upper, double discount,
                          double sigma_max, double gap_max) {
  const double per_step = std::sqrt(variance_coefficient(lambda, beta_upper)) * sigma_max +
                          std::sqrt(gap_coefficient(lambda, beta_lower)) * std::sqrt(gap_max);
  return per_step / (1.0 - discount);
}

double sigma_max_analytic(double reward_bound, double discount) {
  return 2.0 * discount * reward_bound / (1.0 - discount);
}

double gap_max_analytic(double reward_bound, double discount) {
  return square(sigma_max_analytic(reward_bound, discount));
}

TraceMaxima trace_maxima(const SolveTrace& trace, const DomainPair& pair,
                         const TransitionDataset& dataset, const OperatorMode& mode) {
  TraceMaxima m;
  for (const QTable& q : trace.q_history) {
    m.gap_max_est = std::max(m.gap_max_est, dynamics_gap(q, pair.target, pair.source, mode));

    const QTable bt = exact_backup(pair.target, q, mode);
    for (int s = 0; s < pair.target.num_states; ++s) {
      for (int a = 0; a < pair.target.num_actions; ++a) {
        const int n_cell = dataset.count(s, a);
        if (n_cell == 0) continue;
        auto [it, end] = dataset.next_states(s, a);
        double sum = 0.0;
        for (; it != end; ++it) {
          sum += stochastic_backup(q, pair.target.reward_at(s, a), *it, pair.target.discount,
                                   mode);
        }
        m.sigma_max_est = std::max(m.sigma_max_est, std::abs(sum / n_cell - bt.at(s, a)));
      }
    }
  }
  return m;
}

}  // namespace mixbell
