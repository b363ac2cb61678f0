#include <doctest.h>

#include <cmath>

#include "mixbell/mdp.hpp"
#include "oracles.hpp"

using namespace mixbell;
using namespace mixbell_test;

namespace {

/// Two states, two actions. Action 0 stays, action 1 moves to the other
/// state. Deterministic rows keep hand numbers exact.
TabularMdp two_state_chain(double gamma) {
  TabularMdp mdp(2, 2, gamma, 1.0);
  for (int s = 0; s < 2; ++s) {
    mdp.transition_at(s, 0, s) = 1.0;
    mdp.transition_at(s, 1, 1 - s) = 1.0;
  }
  mdp.reward_at(0, 0) = 0.5;
  mdp.reward_at(0, 1) = -0.25;
  mdp.reward_at(1, 0) = 0.125;
  mdp.reward_at(1, 1) = 0.75;
  mdp.initial_dist = {0.5, 0.5};
  return mdp;
}

}  // namespace

TEST_CASE("validate_mdp accepts well-formed inputs") {
  const TabularMdp mdp = two_state_chain(0.9);
  const ValidationReport report = validate_mdp(mdp);
  CHECK(report.ok);
  CHECK(report.violations.empty());

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    CHECK(validate_mdp(random_mdp(6, 4, 0.95, 2.0, seed)).ok);
  }
}

TEST_CASE("validate_mdp flags every violation") {
  TabularMdp mdp = two_state_chain(0.9);
  mdp.transition_at(0, 0, 0) = 0.5;           // row sums to 0.5
  mdp.transition_at(1, 1, 0) = -0.25;         // negative entry
  mdp.reward_at(0, 1) = 1.0;                  // |r| == bound
  mdp.initial_dist = {0.7, 0.7};              // mass 1.4
  const ValidationReport report = validate_mdp(mdp);
  CHECK_FALSE(report.ok);
  CHECK(report.violations.size() == 4);
}

TEST_CASE("validate_mdp discount edge cases") {
  TabularMdp mdp = two_state_chain(0.0);
  CHECK(validate_mdp(mdp).ok);
  mdp.discount = 1.0;
  CHECK_FALSE(validate_mdp(mdp).ok);
  mdp.discount = -0.1;
  CHECK_FALSE(validate_mdp(mdp).ok);
}

TEST_CASE("exact_backup on a deterministic chain matches hand numbers") {
  const TabularMdp mdp = two_state_chain(0.5);
  QTable q(2, 2);
  q.at(0, 0) = 1.0;
  q.at(0, 1) = 2.0;
  q.at(1, 0) = -1.0;
  q.at(1, 1) = 4.0;
  // Greedy next-state values: V(0) = 2, V(1) = 4.
  const QTable out = exact_backup(mdp, q, OperatorMode::optimality());
  CHECK(out.at(0, 0) == 0.5 + 0.5 * 2.0);
  CHECK(out.at(0, 1) == -0.25 + 0.5 * 4.0);
  CHECK(out.at(1, 0) == 0.125 + 0.5 * 4.0);
  CHECK(out.at(1, 1) == 0.75 + 0.5 * 2.0);
}

TEST_CASE("exact_backup agrees with the reference implementation") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const TabularMdp mdp = random_mdp(5, 3, 0.9, 1.0, seed);
    const QTable q = random_qtable(5, 3, 10.0, seed + 100);

    const QTable got = exact_backup(mdp, q, OperatorMode::optimality());
    const QTable want = oracle_backup(mdp, q, OperatorMode::optimality());
    CHECK(sup_norm_diff(got, want) <= 1e-12);

    const OperatorMode eval = OperatorMode::policy_evaluation(random_policy(5, 3, seed + 200));
    const QTable got_eval = exact_backup(mdp, q, eval);
    const QTable want_eval = oracle_backup(mdp, q, eval);
    CHECK(sup_norm_diff(got_eval, want_eval) <= 1e-12);
  }
}

TEST_CASE("stochastic_backup matches hand values and its expectation") {
  QTable q(2, 2);
  q.at(0, 0) = 1.0;
  q.at(0, 1) = 3.0;
  q.at(1, 0) = 2.0;
  q.at(1, 1) = -5.0;
  CHECK(stochastic_backup(q, 0.25, 0, 0.5, OperatorMode::optimality()) == 0.25 + 0.5 * 3.0);

  Policy pi = Policy::uniform(2, 2);
  CHECK(stochastic_backup(q, 0.0, 1, 1.0, OperatorMode::policy_evaluation(pi)) ==
        doctest::Approx(-1.5).epsilon(1e-15));

  // Averaging the single-sample backup over successors recovers the exact
  // backup entry.
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const TabularMdp mdp = random_mdp(4, 3, 0.8, 1.0, seed);
    const QTable table = random_qtable(4, 3, 5.0, seed + 7);
    const OperatorMode mode = OperatorMode::optimality();
    const QTable exact = exact_backup(mdp, table, mode);
    for (int s = 0; s < 4; ++s) {
      for (int a = 0; a < 3; ++a) {
        double acc = 0.0;
        for (int sp = 0; sp < 4; ++sp) {
          acc += mdp.transition_at(s, a, sp) *
                 stochastic_backup(table, mdp.reward_at(s, a), sp, mdp.discount, mode);
        }
        CHECK(std::abs(acc - exact.at(s, a)) <= 1e-12);
      }
    }
  }
}

TEST_CASE("exact_backup is a contraction and monotone") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const TabularMdp mdp = random_mdp(5, 3, 0.9, 1.0, seed);
    const OperatorMode mode = OperatorMode::optimality();
    const QTable q1 = random_qtable(5, 3, 8.0, seed + 10);
    QTable q2 = random_qtable(5, 3, 8.0, seed + 20);

    const double lhs = sup_norm_diff(exact_backup(mdp, q1, mode), exact_backup(mdp, q2, mode));
    CHECK(lhs <= 0.9 * sup_norm_diff(q1, q2) + 1e-12);

    // Lift q2 above q1 entrywise and check the backups stay ordered.
    for (int i = 0; i < q2.size(); ++i) {
      q2.values[i] = q1.values[i] + std::abs(q2.values[i]);
    }
    const QTable b1 = exact_backup(mdp, q1, mode);
    const QTable b2 = exact_backup(mdp, q2, mode);
    for (int i = 0; i < b1.size(); ++i) CHECK(b1.values[i] <= b2.values[i] + 1e-12);
  }
}

TEST_CASE("backups keep tables inside the value range") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const TabularMdp mdp = random_mdp(5, 3, 0.9, 1.0, seed);
    const double range = mdp.reward_bound / (1.0 - mdp.discount);
    QTable q(5, 3, 0.0);
    for (int k = 0; k < 50; ++k) {
      q = exact_backup(mdp, q, OperatorMode::optimality());
      CHECK(sup_norm(q) <= range);
    }
  }
}

TEST_CASE("optimal_q solves closed-form cases") {
  // Single state, single action, self-loop: Q* = r / (1 - gamma).
  TabularMdp loop(1, 1, 0.5, 1.0);
  loop.transition_at(0, 0, 0) = 1.0;
  loop.reward_at(0, 0) = 0.5;
  loop.initial_dist = {1.0};
  CHECK(std::abs(optimal_q(loop).at(0, 0) - 1.0) <= 1e-9);

  // gamma = 0 reduces the fixed point to the reward table.
  const TabularMdp flat = random_mdp(4, 3, 0.0, 1.0, 3);
  const QTable q0 = optimal_q(flat);
  for (int s = 0; s < 4; ++s) {
    for (int a = 0; a < 3; ++a) CHECK(std::abs(q0.at(s, a) - flat.reward_at(s, a)) <= 1e-12);
  }

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const TabularMdp mdp = random_mdp(6, 4, 0.9, 1.0, seed);
    const QTable star = optimal_q(mdp, 1e-12);
    CHECK(sup_norm_diff(exact_backup(mdp, star, OperatorMode::optimality()), star) <= 1e-10);
  }
}

TEST_CASE("greedy_policy breaks ties toward the lowest action") {
  QTable q(2, 3);
  q.at(0, 0) = 1.0;
  q.at(0, 1) = 1.0;  // tie with action 0
  q.at(0, 2) = 0.5;
  q.at(1, 0) = -1.0;
  q.at(1, 1) = 2.0;
  q.at(1, 2) = 2.0;  // tie with action 1
  const Policy pi = greedy_policy(q);
  CHECK(pi.at(0, 0) == 1.0);
  CHECK(pi.at(0, 1) == 0.0);
  CHECK(pi.at(1, 1) == 1.0);
  CHECK(pi.at(1, 2) == 0.0);
}

TEST_CASE("policy_value on a self-loop and against the uniform policy") {
  TabularMdp loop(1, 1, 0.5, 1.0);
  loop.transition_at(0, 0, 0) = 1.0;
  loop.reward_at(0, 0) = 0.5;
  loop.initial_dist = {1.0};
  CHECK(std::abs(policy_value(loop, Policy::uniform(1, 1)) - 1.0) <= 1e-9);

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const TabularMdp mdp = random_mdp(5, 3, 0.9, 1.0, seed);
    const Policy greedy = greedy_policy(optimal_q(mdp));
    CHECK(policy_value(mdp, greedy) >= policy_value(mdp, Policy::uniform(5, 3)) - 1e-9);
  }
}

TEST_CASE("policy evaluation mode uses the policy mix of next values") {
  const TabularMdp mdp = two_state_chain(0.5);
  QTable q(2, 2);
  q.at(0, 0) = 1.0;
  q.at(0, 1) = 3.0;
  q.at(1, 0) = 2.0;
  q.at(1, 1) = 4.0;
  Policy pi(2, 2);
  pi.at(0, 0) = 0.25;
  pi.at(0, 1) = 0.75;
  pi.at(1, 0) = 1.0;
  // V_pi(0) = 0.25*1 + 0.75*3 = 2.5, V_pi(1) = 2.
  const QTable out = exact_backup(mdp, q, OperatorMode::policy_evaluation(pi));
  CHECK(out.at(0, 0) == 0.5 + 0.5 * 2.5);
  CHECK(out.at(0, 1) == -0.25 + 0.5 * 2.0);
}
