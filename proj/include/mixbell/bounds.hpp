#pragma once

#include <vector>

#include "mixbell/data.hpp"
#include "mixbell/mdp.hpp"
#include "mixbell/solver.hpp"

namespace mixbell {

/// Largest squared cellwise difference between target and source exact
/// backups of q.
double dynamics_gap(const QTable& q, const TabularMdp& target, const TabularMdp& source,
                    const OperatorMode& mode);

/// Variance of the single-sample backup of q at one cell. Equals
/// discount^2 times the successor-value variance; the reward offset
/// cancels.
double backup_variance(const QTable& q, const TabularMdp& mdp, int s, int a,
                       const OperatorMode& mode);

/// Worst-case normalized variance: every cell charged as if it held a
/// single sample, so the value is max_cell backup_variance.
double worst_case_normalized_variance(const QTable& q, const TabularMdp& mdp,
                                      const OperatorMode& mode);

/// Realized normalized variance for concrete per-cell counts:
/// max_cell backup_variance / count. Requires full coverage.
double realized_normalized_variance(const QTable& q, const TabularMdp& mdp,
                                    const std::vector<int>& counts, const OperatorMode& mode);

/// Everything the one-step and finite-sample bounds consume.
struct BoundInputs {
  double lambda = 0.0;
  double variance_term = 0.0;  // normalized single-sample backup variance
  double gap = 0.0;            // squared target/source backup gap
  double beta_lower = 1.0;
  double beta_upper = 1.0;
  // The finite-sample deviation term additionally needs:
  int num_states = 0;
  int num_actions = 0;
  int dataset_size = 0;
  double delta = 0.1;
  double reward_bound = 1.0;
  double discount = 0.0;
};

/// One-step excess-error bound:
/// ((1-l)/(1-l+l/b_u))^2 * variance + (l/((1-l)b_l+l))^2 * gap.
double expected_bound(const BoundInputs& in);

/// Minimizer of the one-step bound when both ratio bounds coincide:
/// b^2 v / (b^2 v + b g). Errors when variance and gap are both zero.
double optimal_lambda_closed(double beta, double variance_term, double gap);

/// Minimizer of expected_bound over [0, 1] found numerically: a 1001-point
/// grid scan brackets the minimum, then golden-section search refines it.
/// The returned weight is within tol of a stationary or boundary minimizer.
double optimal_lambda_numeric(const BoundInputs& in, double tol = 1e-8);

/// High-probability one-step bound: expected_bound plus the deviation term
/// scaled by sqrt(log(1/delta)/2) * |S||A|/sqrt(n).
double worst_case_bound(const BoundInputs& in);

struct ConvergenceInputs {
  double lambda = 0.0;
  double beta_lower = 1.0;
  double beta_upper = 1.0;
  double discount = 0.0;
  double sigma_max = 0.0;      // bound on sample-mean backup deviations
  double gap_max = 0.0;        // bound on the squared backup gap over iterates
  double init_dist_term = 0.0; // distance of the initial table from the fixed point
  int step = 0;                // bounds iterate step + 1
};

/// Distance-to-fixed-point bound after step + 1 updates:
/// gamma^(k+1) * init + (1 - gamma^(k+1))/(1 - gamma) * per_step_error.
double convergence_bound(const ConvergenceInputs& in);

/// Asymptotic neighborhood radius: per_step_error / (1 - gamma).
double limit_neighborhood(double lambda, double beta_lower, double beta_upper, double discount,
                          double sigma_max, double gap_max);

/// Upper bound on any sample-mean backup deviation:
/// discount * full value spread = 2 * discount * reward_bound / (1 - discount).
double sigma_max_analytic(double reward_bound, double discount);

/// Upper bound on the squared backup gap between any two domains.
double gap_max_analytic(double reward_bound, double discount);

struct TraceMaxima {
  double gap_max_est = 0.0;    // max dynamics gap over recorded iterates
  double sigma_max_est = 0.0;  // max sample-mean backup deviation over iterates
};

/// Exhaustive per-iterate scan of a recorded trace against its dataset.
TraceMaxima trace_maxima(const SolveTrace& trace, const DomainPair& pair,
                         const TransitionDataset& dataset, const OperatorMode& mode);

}  // namespace mixbell
