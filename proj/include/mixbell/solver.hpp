#pragma once

#include <optional>
#include <vector>

#include "mixbell/data.hpp"
#include "mixbell/mdp.hpp"

namespace mixbell {

struct SolveConfig {
  double lambda = 0.5;
  OperatorMode mode = OperatorMode::optimality();
  int num_iterations = 1;
  std::optional<QTable> init_q;  // zeros when absent
};

/// Per-iteration diagnostics recorded by run_fqi. Row k describes the step
/// that produced iterate k from iterate k-1. Distances refer to the output
/// iterate and are NaN when no reference table was supplied.
struct IterationDiagnostics {
  double empirical_td = 0.0;     // dataset-average squared TD error
  double exact_td_target = 0.0;  // exact target-domain TD error of the step
  double input_gap = 0.0;        // squared target/source backup gap of the input iterate
  double variance_term = 0.0;    // realized variance share of the one-step error split
  double sigma_dev = 0.0;        // max cell deviation of sample-mean backup from exact
  double dist_expabs = 0.0;      // weighted mean |Q - reference|
  double dist_sup = 0.0;         // sup-norm |Q - reference|
};

struct SolveTrace {
  std::vector<QTable> q_history;                  // length K + 1
  std::vector<IterationDiagnostics> diagnostics;  // length K
};

/// Dataset-average squared TD error of q against single-sample backups of
/// q_prev. Rewards and discount come from `mdp`.
double empirical_td_error(const QTable& q, const QTable& q_prev, const TransitionDataset& dataset,
                          const TabularMdp& mdp, const OperatorMode& mode);

/// Exact expected squared TD error under the given domain and cell
/// distribution, successor-average inside each cell.
double expected_td_error(const QTable& q, const QTable& q_prev, const TabularMdp& mdp,
                         const SamplingDistribution& sa_dist, const OperatorMode& mode);

/// Closed-form minimizer of the weighted two-domain objective. Per cell:
///   ((1-lambda)/n * sum_j backup_j + lambda * p_src * exact_src_backup)
///   / ((1-lambda) * p_hat + lambda * p_src).
/// lambda 0 and 1 short-circuit to the plain sample mean and the exact
/// source backup so the boundary semantics are exact. lambda = 0 requires
/// full coverage; for lambda > 0 an uncovered cell degrades to the source
/// term alone.
QTable weighted_update(const QTable& q_prev, const TransitionDataset& dataset,
                       const TabularMdp& source, const SamplingDistribution& source_sa,
                       double lambda, const OperatorMode& mode);

/// Oracle for weighted_update: per-cell ternary search of the scalar
/// objective on [-2B/(1-gamma), 2B/(1-gamma)], then a quadratic-vertex
/// refinement from three well-separated evaluations. Only the objective is
/// evaluated; no code is shared with the closed form.
QTable brute_force_minimizer(const QTable& q_prev, const TransitionDataset& dataset,
                             const TabularMdp& source, const SamplingDistribution& source_sa,
                             double lambda, const OperatorMode& mode);

/// Comparator step: plain exact backup in the target domain.
QTable target_update(const QTable& q_prev, const TabularMdp& target, const OperatorMode& mode);

/// Runs `num_iterations` weighted updates on a fixed dataset, recording the
/// full iterate history and per-step diagnostics. `reference` (for example
/// the target fixed point) enables the distance columns.
SolveTrace run_fqi(const DomainPair& pair, const TransitionDataset& dataset,
                   const SolveConfig& config, const QTable* reference = nullptr);

}  // namespace mixbell
