#include "mixbell/mdp.hpp"

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

}  // namespace

double sup_norm(const QTable& q) {
  double m = 0.0;
  for (double v : q.values) m = std::max(m, std::abs(v));
  return m;
}

double sup_norm_diff(const QTable& a, const QTable& b) {
  if (a.num_states != b.num_states || a.num_actions != b.num_actions) {
    throw std::invalid_argument("sup_norm_diff: shape mismatch");
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    m = std::max(m, std::abs(a.values[i] - b.values[i]));
  }
  return m;
}

Policy Policy::uniform(int states, int actions) {
  Policy pi(states, actions, 1.0 / actions);
  return pi;
}

Policy Policy::deterministic(int states, int actions, const std::vector<int>& action) {
  if (static_cast<int>(action.size()) != states) {
    throw std::invalid_argument("Policy::deterministic: one action per state required");
  }
  Policy pi(states, actions, 0.0);
  for (int s = 0; s < states; ++s) {
    if (action[s] < 0 || action[s] >= actions) {
      throw std::invalid_argument("Policy::deterministic: action index out of range");
    }
    pi.at(s, action[s]) = 1.0;
  }
  return pi;
}

ValidationReport validate_mdp(const TabularMdp& mdp) {
  ValidationReport report;
  auto fail = [&report](std::string msg) {
    report.ok = false;
    report.violations.push_back(std::move(msg));
  };

  const int S = mdp.num_states;
  const int A = mdp.num_actions;
  if (S <= 0 || A <= 0) {
    fail("state and action counts must be positive");
    return report;
  }
  if (mdp.transition.size() != static_cast<std::size_t>(S) * A * S) {
    fail("transition tensor has wrong size");
  }
  if (mdp.reward.size() != static_cast<std::size_t>(S) * A) {
    fail("reward table has wrong size");
  }
  if (mdp.initial_dist.size() != static_cast<std::size_t>(S)) {
    fail("initial distribution has wrong size");
  }
  if (!report.ok) return report;

  if (!(mdp.discount >= 0.0 && mdp.discount < 1.0)) {
    fail("discount must lie in [0, 1)");
  }
  if (!(mdp.reward_bound > 0.0)) {
    fail("reward bound must be positive");
  }

  constexpr double kRowTol = 1e-12;
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      double row_sum = 0.0;
      bool negative = false;
      for (int sp = 0; sp < S; ++sp) {
        const double p = mdp.transition_at(s, a, sp);
        if (p < 0.0) negative = true;
        row_sum += p;
      }
      if (negative) {
        fail("negative transition probability at " + cell_name(s, a));
      } else if (!(std::abs(row_sum - 1.0) <= kRowTol)) {
        fail("transition row does not sum to one at " + cell_name(s, a));
      }
      if (!(std::abs(mdp.reward_at(s, a)) < mdp.reward_bound)) {
        fail("reward magnitude must be strictly below the bound at " + cell_name(s, a));
      }
    }
  }

  double init_sum = 0.0;
  bool init_negative = false;
  for (int s = 0; s < S; ++s) {
    if (mdp.initial_dist[s] < 0.0) init_negative = true;
    init_sum += mdp.initial_dist[s];
  }
  if (init_negative) {
    fail("negative initial probability");
  } else if (!(std::abs(init_sum - 1.0) <= kRowTol)) {
    fail("initial distribution does not sum to one");
  }
  return report;
}

double next_state_value(const QTable& q, int next_state, const OperatorMode& mode) {
  if (mode.is_optimality()) {
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < q.num_actions; ++a) best = std::max(best, q.at(next_state, a));
    return best;
  }
  const Policy& pi = mode.policy();
  double v = 0.0;
  for (int a = 0; a < q.num_actions; ++a) v += pi.at(next_state, a) * q.at(next_state, a);
  return v;
}

QTable exact_backup(const TabularMdp& mdp, const QTable& q, const OperatorMode& mode) {
  const int S = mdp.num_states;
  const int A = mdp.num_actions;
  if (q.num_states != S || q.num_actions != A) {
    throw std::invalid_argument("exact_backup: table shape does not match the MDP");
  }
  std::vector<double> next_value(S);
  for (int sp = 0; sp < S; ++sp) next_value[sp] = next_state_value(q, sp, mode);

  QTable out(S, A);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      double acc = 0.0;
      for (int sp = 0; sp < S; ++sp) acc += mdp.transition_at(s, a, sp) * next_value[sp];
      out.at(s, a) = mdp.reward_at(s, a) + mdp.discount * acc;
    }
  }
  return out;
}

double stochastic_backup(const QTable& q, double reward, int next_state, double discount,
                         const OperatorMode& mode) {
  return reward + discount * next_state_value(q, next_state, mode);
}

QTable optimal_q(const TabularMdp& mdp, double tol, int max_iters) {
  QTable q(mdp.num_states, mdp.num_actions, 0.0);
  const OperatorMode mode = OperatorMode::optimality();
  for (int it = 0; it < max_iters; ++it) {
    QTable next = exact_backup(mdp, q, mode);
    const double residual = sup_norm_diff(next, q);
    q = std::move(next);
    if (residual <= tol) return q;
  }
  throw std::runtime_error("optimal_q: did not reach the requested tolerance");
}

Policy greedy_policy(const QTable& q) {
  std::vector<int> best(q.num_states, 0);
  for (int s = 0; s < q.num_states; ++s) {
    for (int a = 1; a < q.num_actions; ++a) {
      if (q.at(s, a) > q.at(s, best[s])) best[s] = a;
    }
  }
  return Policy::deterministic(q.num_states, q.num_actions, best);
}

double policy_value(const TabularMdp& mdp, const Policy& pi, double tol) {
  const int S = mdp.num_states;
  const int A = mdp.num_actions;
  if (pi.num_states != S || pi.num_actions != A) {
    throw std::invalid_argument("policy_value: policy shape does not match the MDP");
  }
  // V <- r_pi + gamma * P_pi V until successive iterates pin the fixed
  // point to within tol.
  std::vector<double> value(S, 0.0), next(S, 0.0);
  const double gamma = mdp.discount;
  const double stop = gamma > 0.0 ? tol * (1.0 - gamma) / gamma
                                  : std::numeric_limits<double>::infinity();
  for (int it = 0; it < 1000000; ++it) {
    double delta = 0.0;
    for (int s = 0; s < S; ++s) {
      double acc = 0.0;
      for (int a = 0; a < A; ++a) {
        double ev = 0.0;
        for (int sp = 0; sp < S; ++sp) ev += mdp.transition_at(s, a, sp) * value[sp];
        acc += pi.at(s, a) * (mdp.reward_at(s, a) + gamma * ev);
      }
      next[s] = acc;
      delta = std::max(delta, std::abs(next[s] - value[s]));
    }
    value.swap(next);
    if (delta <= stop) break;
  }
  double ret = 0.0;
  for (int s = 0; s < S; ++s) ret += mdp.initial_dist[s] * value[s];
  return ret;
}

}  // namespace mixbell
