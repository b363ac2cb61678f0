#pragma once

// Slow reference implementations used only to cross-check the library.
// They deliberately share no code with src/: accumulation runs in long
// double and algebraic forms differ where possible.

#include <cmath>
#include <vector>

#include "mixbell/data.hpp"
#include "mixbell/mdp.hpp"
#include "mixbell/random.hpp"

namespace mixbell_test {

inline double oracle_next_value(const mixbell::QTable& q, int sp,
                                const mixbell::OperatorMode& mode) {
  if (mode.is_optimality()) {
    double best = q.at(sp, 0);
    for (int a = 1; a < q.num_actions; ++a) {
      if (q.at(sp, a) > best) best = q.at(sp, a);
    }
    return best;
  }
  long double acc = 0.0L;
  for (int a = 0; a < q.num_actions; ++a) {
    acc += static_cast<long double>(mode.policy().at(sp, a)) * q.at(sp, a);
  }
  return static_cast<double>(acc);
}

inline mixbell::QTable oracle_backup(const mixbell::TabularMdp& mdp, const mixbell::QTable& q,
                                     const mixbell::OperatorMode& mode) {
  mixbell::QTable out(mdp.num_states, mdp.num_actions);
  for (int s = 0; s < mdp.num_states; ++s) {
    for (int a = 0; a < mdp.num_actions; ++a) {
      long double acc = 0.0L;
      for (int sp = 0; sp < mdp.num_states; ++sp) {
        acc += static_cast<long double>(mdp.transition_at(s, a, sp)) *
               oracle_next_value(q, sp, mode);
      }
      out.at(s, a) = static_cast<double>(mdp.reward_at(s, a) + mdp.discount * acc);
    }
  }
  return out;
}

inline double oracle_expected_td(const mixbell::QTable& q, const mixbell::QTable& q_prev,
                                 const mixbell::TabularMdp& mdp,
                                 const mixbell::SamplingDistribution& dist,
                                 const mixbell::OperatorMode& mode) {
  long double acc = 0.0L;
  for (int s = 0; s < mdp.num_states; ++s) {
    for (int a = 0; a < mdp.num_actions; ++a) {
      for (int sp = 0; sp < mdp.num_states; ++sp) {
        const long double target =
            mdp.reward_at(s, a) + mdp.discount * oracle_next_value(q_prev, sp, mode);
        const long double diff = q.at(s, a) - target;
        acc += static_cast<long double>(dist.at(s, a)) * mdp.transition_at(s, a, sp) * diff * diff;
      }
    }
  }
  return static_cast<double>(acc);
}

/// Backup variance via E[X^2] - (E[X])^2 rather than the two-pass form.
inline double oracle_backup_variance(const mixbell::QTable& q, const mixbell::TabularMdp& mdp,
                                     int s, int a, const mixbell::OperatorMode& mode) {
  long double ex = 0.0L;
  long double ex2 = 0.0L;
  for (int sp = 0; sp < mdp.num_states; ++sp) {
    const long double x =
        mdp.reward_at(s, a) + mdp.discount * oracle_next_value(q, sp, mode);
    ex += mdp.transition_at(s, a, sp) * x;
    ex2 += mdp.transition_at(s, a, sp) * x * x;
  }
  return static_cast<double>(ex2 - ex * ex);
}

/// Random MDP helper shared by many tests.
inline mixbell::TabularMdp random_mdp(int states, int actions, double gamma, double bound,
                                      std::uint64_t seed) {
  mixbell::TabularMdp mdp(states, actions, gamma, bound);
  mixbell::Rng rng(seed);
  for (int s = 0; s < states; ++s) {
    for (int a = 0; a < actions; ++a) {
      double total = 0.0;
      std::vector<double> row(states);
      for (int sp = 0; sp < states; ++sp) {
        row[sp] = -std::log1p(-rng.uniform());
        total += row[sp];
      }
      for (int sp = 0; sp < states; ++sp) mdp.transition_at(s, a, sp) = row[sp] / total;
      double r = bound * (2.0 * rng.uniform() - 1.0);
      while (!(std::abs(r) < bound)) r = bound * (2.0 * rng.uniform() - 1.0);
      mdp.reward_at(s, a) = r;
    }
  }
  double total = 0.0;
  std::vector<double> init(states);
  for (int s = 0; s < states; ++s) {
    init[s] = -std::log1p(-rng.uniform());
    total += init[s];
  }
  for (int s = 0; s < states; ++s) mdp.initial_dist[s] = init[s] / total;
  return mdp;
}

inline mixbell::QTable random_qtable(int states, int actions, double magnitude,
                                     std::uint64_t seed) {
  mixbell::QTable q(states, actions);
  mixbell::Rng rng(seed);
  for (double& v : q.values) v = magnitude * (2.0 * rng.uniform() - 1.0);
  return q;
}

inline mixbell::Policy random_policy(int states, int actions, std::uint64_t seed) {
  mixbell::Policy pi(states, actions);
  mixbell::Rng rng(seed);
  for (int s = 0; s < states; ++s) {
    double total = 0.0;
    for (int a = 0; a < actions; ++a) {
      pi.at(s, a) = -std::log1p(-rng.uniform());
      total += pi.at(s, a);
    }
    for (int a = 0; a < actions; ++a) pi.at(s, a) /= total;
  }
  return pi;
}

}  // namespace mixbell_test
