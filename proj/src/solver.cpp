#include "mixbell/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace mixbell {

namespace {

std::string cell_name(int s, int a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "(s=%d, a=%d)", s, a);
  return buf;
}

std::vector<double> next_values(const QTable& q, const OperatorMode& mode) {
  std::vector<double> v(q.num_states);
  for (int sp = 0; sp < q.num_states; ++sp) v[sp] = next_state_value(q, sp, mode);
  return v;
}

void require_same_shape(const QTable& q, const TabularMdp& mdp, const char* where) {
  if (q.num_states != mdp.num_states || q.num_actions != mdp.num_actions) {
    throw std::invalid_argument(std::string(where) + ": table shape does not match the MDP");
  }
}

}  // namespace

double empirical_td_error(const QTable& q, const QTable& q_prev, const TransitionDataset& dataset,
                          const TabularMdp& mdp, const OperatorMode& mode) {
  require_same_shape(q, mdp, "empirical_td_error");
  require_same_shape(q_prev, mdp, "empirical_td_error");
  if (dataset.size() == 0) {
    throw std::invalid_argument("empirical_td_error: dataset is empty");
  }
  const std::vector<double> vprev = next_values(q_prev, mode);
  double acc = 0.0;
  for (const Transition& t : dataset.triples) {
    const double target = mdp.reward_at(t.state, t.action) + mdp.discount * vprev[t.next_state];
    const double diff = q.at(t.state, t.action) - target;
    acc += diff * diff;
  }
  return acc / dataset.size();
}

double expected_td_error(const QTable& q, const QTable& q_prev, const TabularMdp& mdp,
                         const SamplingDistribution& sa_dist, const OperatorMode& mode) {
  require_same_shape(q, mdp, "expected_td_error");
  require_same_shape(q_prev, mdp, "expected_td_error");
  const std::vector<double> vprev = next_values(q_prev, mode);
  double acc = 0.0;
  for (int s = 0; s < mdp.num_states; ++s) {
    for (int a = 0; a < mdp.num_actions; ++a) {
      const double r = mdp.reward_at(s, a);
      double cell = 0.0;
      for (int sp = 0; sp < mdp.num_states; ++sp) {
        const double diff = q.at(s, a) - (r + mdp.discount * vprev[sp]);
        cell += mdp.transition_at(s, a, sp) * diff * diff;
      }
      acc += sa_dist.at(s, a) * cell;
    }
  }
  return acc;
}

QTable weighted_update(const QTable& q_prev, const TransitionDataset& dataset,
                       const TabularMdp& source, const SamplingDistribution& source_sa,
                       double lambda, const OperatorMode& mode) {
  require_same_shape(q_prev, source, "weighted_update");
  if (dataset.num_states != source.num_states || dataset.num_actions != source.num_actions) {
    throw std::invalid_argument("weighted_update: dataset shape does not match the MDP");
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("weighted_update: lambda must lie in [0, 1]");
  }
  if (lambda == 1.0) return exact_backup(source, q_prev, mode);

  const int S = source.num_states;
  const int A = source.num_actions;
  const int n = dataset.size();
  const std::vector<double> vprev = next_values(q_prev, mode);

  QTable out(S, A);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      const double r = source.reward_at(s, a);
      const int n_cell = dataset.count(s, a);
      if (lambda == 0.0) {
        if (n_cell == 0) {
          throw std::runtime_error("weighted_update: lambda 0 needs samples in cell " +
                                   cell_name(s, a));
        }
        auto [it, end] = dataset.next_states(s, a);
        double sum = 0.0;
        for (; it != end; ++it) sum += r + source.discount * vprev[*it];
        out.at(s, a) = sum / n_cell;
        continue;
      }

      double src_exp = 0.0;
      for (int sp = 0; sp < S; ++sp) src_exp += source.transition_at(s, a, sp) * vprev[sp];
      const double src_backup = r + source.discount * src_exp;
      if (n_cell == 0) {
        out.at(s, a) = src_backup;
        continue;
      }
      auto [it, end] = dataset.next_states(s, a);
      double sum = 0.0;
      for (; it != end; ++it) sum += r + source.discount * vprev[*it];
      const double p_src = source_sa.at(s, a);
      const double p_hat = static_cast<double>(n_cell) / n;
      const double numer = (1.0 - lambda) * (sum / n) + lambda * p_src * src_backup;
      const double denom = (1.0 - lambda) * p_hat + lambda * p_src;
      out.at(s, a) = numer / denom;
    }
  }
  return out;
}

QTable brute_force_minimizer(const QTable& q_prev, const TransitionDataset& dataset,
                             const TabularMdp& source, const SamplingDistribution& source_sa,
                             double lambda, const OperatorMode& mode) {
  require_same_shape(q_prev, source, "brute_force_minimizer");
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("brute_force_minimizer: lambda must lie in [0, 1]");
  }
  const int S = source.num_states;
  const int A = source.num_actions;
  const int n = dataset.size();
  const double reach = 2.0 * source.reward_bound / (1.0 - source.discount);

  QTable out(S, A);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      const double r = source.reward_at(s, a);
      const int n_cell = dataset.count(s, a);
      if (lambda == 0.0 && n_cell == 0) {
        throw std::runtime_error("brute_force_minimizer: lambda 0 needs samples in cell " +
                                 cell_name(s, a));
      }
      std::vector<double> sample_backups;
      sample_backups.reserve(n_cell);
      auto [it, end] = dataset.next_states(s, a);
      for (; it != end; ++it) {
        sample_backups.push_back(stochastic_backup(q_prev, r, *it, source.discount, mode));
      }
      std::vector<double> src_backups(S);
      for (int sp = 0; sp < S; ++sp) {
        src_backups[sp] = stochastic_backup(q_prev, r, sp, source.discount, mode);
      }
      const double p_src = source_sa.at(s, a);
      const auto objective = [&](double v) {
        double data_term = 0.0;
        for (double b : sample_backups) data_term += (v - b) * (v - b);
        if (n > 0) data_term /= n;
        double src_term = 0.0;
        for (int sp = 0; sp < S; ++sp) {
          src_term += source.transition_at(s, a, sp) * (v - src_backups[sp]) * (v - src_backups[sp]);
        }
        return (1.0 - lambda) * data_term + lambda * p_src * src_term;
      };

      double lo = -reach;
      double hi = reach;
      for (int iter = 0; iter < 500 && hi - lo > 1e-6; ++iter) {
        const double m1 = lo + (hi - lo) / 3.0;
        const double m2 = hi - (hi - lo) / 3.0;
        if (objective(m1) < objective(m2)) {
          hi = m2;
        } else {
          lo = m1;
        }
      }
      double best = 0.5 * (lo + hi);
      // Near the minimum the ternary comparisons drown in rounding. The
      // objective is a quadratic in v, so the vertex of the parabola
      // through three well-separated evaluations nails the minimizer.
      const double h = std::max(1.0, 0.125 * reach);
      for (int refine = 0; refine < 2; ++refine) {
        const double f_lo = objective(best - h);
        const double f_mid = objective(best);
        const double f_hi = objective(best + h);
        const double denom = f_hi - 2.0 * f_mid + f_lo;
        if (denom <= 0.0) break;
        best = std::min(reach, std::max(-reach, best + 0.5 * h * (f_lo - f_hi) / denom));
      }
      out.at(s, a) = best;
    }
  }
  return out;
}

QTable target_update(const QTable& q_prev, const TabularMdp& target, const OperatorMode& mode) {
  return exact_backup(target, q_prev, mode);
}

SolveTrace run_fqi(const DomainPair& pair, const TransitionDataset& dataset,
                   const SolveConfig& config, const QTable* reference) {
  const int S = pair.target.num_states;
  const int A = pair.target.num_actions;
  if (config.num_iterations < 0) {
    throw std::invalid_argument("run_fqi: iteration count must be nonnegative");
  }
  SolveTrace trace;
  QTable q = config.init_q ? *config.init_q : QTable(S, A, 0.0);
  require_same_shape(q, pair.target, "run_fqi");
  trace.q_history.push_back(q);

  for (int k = 1; k <= config.num_iterations; ++k) {
    const QTable& prev = trace.q_history.back();
    QTable next = weighted_update(prev, dataset, pair.source, pair.source_sa, config.lambda,
                                  config.mode);

    IterationDiagnostics d;
    d.empirical_td = empirical_td_error(next, prev, dataset, pair.target, config.mode);
    d.exact_td_target = expected_td_error(next, prev, pair.target, pair.target_sa, config.mode);

    const QTable bt = exact_backup(pair.target, prev, config.mode);
    const QTable bs = exact_backup(pair.source, prev, config.mode);
    const double gap_sup = sup_norm_diff(bt, bs);
    d.input_gap = gap_sup * gap_sup;

    const std::vector<double> vprev = next_values(prev, config.mode);
    const int n = dataset.size();
    double var_term = 0.0;
    double sigma_dev = 0.0;
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        const int n_cell = dataset.count(s, a);
        if (n_cell == 0) continue;
        double mean_v = 0.0;
        for (int sp = 0; sp < S; ++sp) mean_v += pair.target.transition_at(s, a, sp) * vprev[sp];
        double var_v = 0.0;
        for (int sp = 0; sp < S; ++sp) {
          const double dv = vprev[sp] - mean_v;
          var_v += pair.target.transition_at(s, a, sp) * dv * dv;
        }
        const double backup_var = pair.target.discount * pair.target.discount * var_v;

        const double p_hat = static_cast<double>(n_cell) / n;
        const double p_src = pair.source_sa.at(s, a);
        const double mix = (1.0 - config.lambda) * p_hat + config.lambda * p_src;
        const double share = mix > 0.0 ? (1.0 - config.lambda) * p_hat / mix : 0.0;
        var_term += pair.target_sa.at(s, a) * share * share * backup_var / n_cell;

        auto [it, end] = dataset.next_states(s, a);
        double sum_v = 0.0;
        for (; it != end; ++it) sum_v += vprev[*it];
        const double mean_backup_dev =
            pair.target.discount * std::abs(sum_v / n_cell - mean_v);
        sigma_dev = std::max(sigma_dev, mean_backup_dev);
      }
    }
    d.variance_term = var_term;
    d.sigma_dev = sigma_dev;

    if (reference != nullptr) {
      double expabs = 0.0;
      double sup = 0.0;
      for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
          const double diff = std::abs(next.at(s, a) - reference->at(s, a));
          expabs += pair.target_sa.at(s, a) * diff;
          sup = std::max(sup, diff);
        }
      }
      d.dist_expabs = expabs;
      d.dist_sup = sup;
    } else {
      d.dist_expabs = std::numeric_limits<double>::quiet_NaN();
      d.dist_sup = std::numeric_limits<double>::quiet_NaN();
    }

    trace.diagnostics.push_back(d);
    trace.q_history.push_back(std::move(next));
  }
  return trace;
}

}  // namespace mixbell
