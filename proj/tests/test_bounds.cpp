#include <doctest.h>

#include <cmath>

#include "mixbell/bounds.hpp"
#include "oracles.hpp"

using namespace mixbell;
using namespace mixbell_test;

namespace {

BoundInputs basic_inputs(double lambda, double variance, double gap, double beta_lower,
                         double beta_upper) {
  BoundInputs in;
  in.lambda = lambda;
  in.variance_term = variance;
  in.gap = gap;
  in.beta_lower = beta_lower;
  in.beta_upper = beta_upper;
  in.num_states = 5;
  in.num_actions = 3;
  in.dataset_size = 100;
  in.delta = 0.1;
  in.reward_bound = 1.0;
  in.discount = 0.9;
  return in;
}

}  // namespace

TEST_CASE("backup variance on a two-point successor value") {
  // Successor values 0 and 1 with probability one half each, discount 0.9:
  // variance of the backup is 0.81 * 0.25 = 0.2025, whatever the reward.
  TabularMdp mdp(2, 1, 0.9, 1.0);
  mdp.transition_at(0, 0, 0) = 0.5;
  mdp.transition_at(0, 0, 1) = 0.5;
  mdp.transition_at(1, 0, 1) = 1.0;
  mdp.reward_at(0, 0) = 0.75;
  mdp.reward_at(1, 0) = -0.5;
  mdp.initial_dist = {1.0, 0.0};
  QTable q(2, 1);
  q.at(0, 0) = 0.0;
  q.at(1, 0) = 1.0;
  CHECK(std::abs(backup_variance(q, mdp, 0, 0, OperatorMode::optimality()) - 0.2025) <= 1e-15);
  CHECK(backup_variance(q, mdp, 1, 0, OperatorMode::optimality()) == 0.0);

  // Constant tables have zero-variance backups everywhere.
  const QTable flat(2, 1, 3.0);
  CHECK(backup_variance(flat, mdp, 0, 0, OperatorMode::optimality()) == 0.0);
}

TEST_CASE("backup variance agrees with the reference form") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const TabularMdp mdp = random_mdp(5, 3, 0.9, 1.0, seed);
    const QTable q = random_qtable(5, 3, 5.0, seed + 9);
    for (int s = 0; s < 5; ++s) {
      for (int a = 0; a < 3; ++a) {
        const double got = backup_variance(q, mdp, s, a, OperatorMode::optimality());
        const double want = oracle_backup_variance(q, mdp, s, a, OperatorMode::optimality());
        CHECK(std::abs(got - want) <= 1e-10);
      }
    }
  }
}

TEST_CASE("normalized variance: worst case dominates every realization") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const TabularMdp mdp = random_mdp(4, 3, 0.9, 1.0, seed);
    const QTable q = random_qtable(4, 3, 5.0, seed + 5);
    const OperatorMode mode = OperatorMode::optimality();
    const double worst = worst_case_normalized_variance(q, mdp, mode);

    Rng rng(seed);
    std::vector<int> counts(12);
    for (int& c : counts) c = 1 + static_cast<int>(rng.bits() % 20);
    CHECK(realized_normalized_variance(q, mdp, counts, mode) <= worst + 1e-15);

    // Equal counts scale the worst case exactly.
    const std::vector<int> fours(12, 4);
    CHECK(std::abs(realized_normalized_variance(q, mdp, fours, mode) - worst / 4.0) <= 1e-15);

    const std::vector<int> holey = [&] {
      std::vector<int> c(12, 2);
      c[5] = 0;
      return c;
    }();
    CHECK_THROWS(realized_normalized_variance(q, mdp, holey, mode));
  }
}

TEST_CASE("dynamics gap basics") {
  const TabularMdp mdp = random_mdp(4, 2, 0.9, 1.0, 3);
  const QTable q = random_qtable(4, 2, 5.0, 4);
  const OperatorMode mode = OperatorMode::optimality();
  CHECK(dynamics_gap(q, mdp, mdp, mode) == 0.0);

  TabularMdp flat = mdp;
  flat.discount = 0.0;
  TabularMdp flat_other = perturb_dynamics(flat, 0.8, 9);
  CHECK(dynamics_gap(q, flat, flat_other, mode) == 0.0);

  // Deterministic rows moving to successors with values 2 and 5 under
  // discount 0.5: the squared backup gap is (0.5 * 3)^2 = 2.25.
  TabularMdp target(2, 1, 0.5, 10.0);
  target.transition_at(0, 0, 0) = 1.0;
  target.transition_at(1, 0, 0) = 1.0;
  target.initial_dist = {1.0, 0.0};
  TabularMdp source = target;
  source.transition_at(0, 0, 0) = 0.0;
  source.transition_at(0, 0, 1) = 1.0;
  QTable values(2, 1);
  values.at(0, 0) = 2.0;
  values.at(1, 0) = 5.0;
  CHECK(dynamics_gap(values, target, source, mode) == 2.25);
}

TEST_CASE("expected bound reduces correctly at the boundary weights") {
  const BoundInputs at_zero = basic_inputs(0.0, 0.37, 1.4, 0.5, 2.0);
  CHECK(expected_bound(at_zero) == 0.37);
  const BoundInputs at_one = basic_inputs(1.0, 0.37, 1.4, 0.5, 2.0);
  CHECK(expected_bound(at_one) == 1.4);

  // Hand value in the interior with unit ratio bounds: coefficients are
  // (1-l)^2 and l^2.
  const BoundInputs mid = basic_inputs(0.25, 0.4, 0.8, 1.0, 1.0);
  CHECK(std::abs(expected_bound(mid) - (0.5625 * 0.4 + 0.0625 * 0.8)) <= 1e-15);
}

TEST_CASE("closed-form optimal weight") {
  // beta^2 v / (beta^2 v + beta g) with beta 2, v 0.3, g 0.7: 1.2/2.6.
  CHECK(std::abs(optimal_lambda_closed(2.0, 0.3, 0.7) - 1.2 / 2.6) <= 1e-15);
  CHECK(optimal_lambda_closed(3.0, 0.0, 0.5) == 0.0);
  CHECK(optimal_lambda_closed(3.0, 0.5, 0.0) == 1.0);
  CHECK_THROWS(optimal_lambda_closed(1.0, 0.0, 0.0));
  CHECK_THROWS(optimal_lambda_closed(0.0, 0.5, 0.5));
}

TEST_CASE("closed-form weight is stationary for the matched-ratio bound") {
  // With both ratio bounds equal the closed form must beat every grid
  // point of the one-step bound.
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const double beta = 0.25 + 4.0 * rng.uniform();
    const double v = 0.01 + rng.uniform();
    const double g = 0.01 + rng.uniform();
    BoundInputs in = basic_inputs(0.0, v, g, beta, beta);
    in.lambda = optimal_lambda_closed(beta, v, g);
    const double best = expected_bound(in);
    for (int i = 0; i <= 2000; ++i) {
      in.lambda = static_cast<double>(i) / 2000;
      CHECK(expected_bound(in) >= best - 1e-12);
    }
  }
}

TEST_CASE("numeric optimal weight matches the closed form on matched ratios") {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const double beta = 0.25 + 4.0 * rng.uniform();
    const double v = 0.01 + rng.uniform();
    const double g = 0.01 + rng.uniform();
    const BoundInputs in = basic_inputs(0.0, v, g, beta, beta);
    const double numeric = optimal_lambda_numeric(in, 1e-8);
    const double closed = optimal_lambda_closed(beta, v, g);
    CHECK(std::abs(numeric - closed) <= 1e-6);
  }
}

TEST_CASE("numeric optimal weight lands on the boundary in degenerate cases") {
  const BoundInputs no_variance = basic_inputs(0.0, 0.0, 0.9, 0.5, 2.0);
  CHECK(std::abs(optimal_lambda_numeric(no_variance, 1e-8)) <= 1e-6);
  const BoundInputs no_gap = basic_inputs(0.0, 0.9, 0.0, 0.5, 2.0);
  CHECK(std::abs(optimal_lambda_numeric(no_gap, 1e-8) - 1.0) <= 1e-6);
}

TEST_CASE("numeric optimal weight beats a fine grid with split ratios") {
  Rng rng(29);
  for (int trial = 0; trial < 10; ++trial) {
    const double beta_lower = 0.2 + 0.7 * rng.uniform();
    const double beta_upper = beta_lower + 0.1 + 3.0 * rng.uniform();
    BoundInputs in = basic_inputs(0.0, 0.05 + rng.uniform(), 0.05 + rng.uniform(), beta_lower,
                                  beta_upper);
    in.lambda = optimal_lambda_numeric(in, 1e-10);
    const double best = expected_bound(in);
    for (int i = 0; i <= 10000; ++i) {
      in.lambda = static_cast<double>(i) / 10000;
      CHECK(expected_bound(in) >= best - 1e-10);
    }
  }
}

TEST_CASE("optimal weight responds monotonically to the gap") {
  // Halving the gap strictly raises the optimal weight.
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const double beta = std::exp(rng.uniform(-2.0, 2.0));
    const double v = std::exp(rng.uniform(-4.0, 4.0));
    const double g = std::exp(rng.uniform(-4.0, 4.0));
    CHECK(optimal_lambda_closed(beta, v, 0.5 * g) > optimal_lambda_closed(beta, v, g));
  }
}

TEST_CASE("finite-sample bound structure") {
  const BoundInputs at_one = basic_inputs(1.0, 0.3, 0.8, 0.5, 2.0);
  CHECK(worst_case_bound(at_one) == expected_bound(at_one));
  CHECK(worst_case_bound(at_one) == 0.8);

  BoundInputs no_discount = basic_inputs(0.4, 0.3, 0.8, 0.5, 2.0);
  no_discount.discount = 0.0;
  CHECK(worst_case_bound(no_discount) == expected_bound(no_discount));

  // Quadrupling the sample count halves the deviation term.
  const BoundInputs base = basic_inputs(0.4, 0.3, 0.8, 0.5, 2.0);
  BoundInputs bigger = base;
  bigger.dataset_size = 400;
  const double dev_small = worst_case_bound(base) - expected_bound(base);
  const double dev_large = worst_case_bound(bigger) - expected_bound(bigger);
  CHECK(dev_small > 0.0);
  CHECK(std::abs(dev_small - 2.0 * dev_large) <= 1e-12 * dev_small);

  // Tightening delta can only enlarge the bound.
  BoundInputs tighter = base;
  tighter.delta = 0.01;
  CHECK(worst_case_bound(tighter) > worst_case_bound(base));
}

TEST_CASE("convergence bound and its limit") {
  ConvergenceInputs in;
  in.lambda = 0.5;
  in.beta_lower = 0.8;
  in.beta_upper = 1.25;
  in.discount = 0.9;
  in.sigma_max = 0.6;
  in.gap_max = 0.49;
  in.init_dist_term = 11.0;

  // Step 0 by hand: gamma * init + per_step, with
  // per_step = (0.5/(0.5+0.5/1.25))*0.6 + (0.5/(0.5*0.8+0.5))*0.7.
  const double coef_var = 0.5 / (0.5 + 0.5 / 1.25);
  const double coef_gap = 0.5 / (0.5 * 0.8 + 0.5);
  const double per_step = coef_var * 0.6 + coef_gap * 0.7;
  in.step = 0;
  CHECK(std::abs(convergence_bound(in) - (0.9 * 11.0 + per_step)) <= 1e-12);

  // The bound decreases toward the neighborhood radius as steps grow.
  const double limit = limit_neighborhood(0.5, 0.8, 1.25, 0.9, 0.6, 0.49);
  CHECK(std::abs(limit - per_step / 0.1) <= 1e-12);
  double prev = convergence_bound(in);
  for (int k = 1; k <= 200; k += 20) {
    in.step = k;
    const double now = convergence_bound(in);
    CHECK(now <= prev + 1e-12);
    prev = now;
  }
  in.step = 2000;
  CHECK(std::abs(convergence_bound(in) - limit) <= 1e-6);
}

TEST_CASE("analytic envelopes dominate trace estimates") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    DomainPair pair;
    pair.target = random_mdp(5, 3, 0.9, 1.0, seed);
    pair.source = perturb_dynamics(pair.target, 0.4, seed + 2);
    pair.target_sa = SamplingDistribution::uniform(5, 3);
    pair.source_sa = SamplingDistribution::uniform(5, 3);
    TransitionDataset d = sample_dataset(pair.target, pair.target_sa, 300, seed + 3);
    while (!coverage_check(d).ok) d = sample_dataset(pair.target, pair.target_sa, 300, d.seed + 1);

    SolveConfig config;
    config.lambda = 0.5;
    config.num_iterations = 10;
    const SolveTrace trace = run_fqi(pair, d, config);
    const TraceMaxima maxima = trace_maxima(trace, pair, d, config.mode);

    CHECK(maxima.sigma_max_est <= sigma_max_analytic(1.0, 0.9));
    CHECK(maxima.gap_max_est <= gap_max_analytic(1.0, 0.9));

    // The per-iterate diagnostics can never exceed the trace maxima.
    for (const IterationDiagnostics& diag : trace.diagnostics) {
      CHECK(diag.input_gap <= maxima.gap_max_est + 1e-15);
      CHECK(diag.sigma_dev <= maxima.sigma_max_est + 1e-15);
    }
  }
}
