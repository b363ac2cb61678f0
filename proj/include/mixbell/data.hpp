#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "mixbell/mdp.hpp"

namespace mixbell {

/// Distribution over state-action pairs used to draw dataset cells.
/// Entries are strictly positive and sum to one.
struct SamplingDistribution {
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> probs;  // [s*A + a]

  SamplingDistribution() = default;
  SamplingDistribution(int states, int actions, std::vector<double> p);

  static SamplingDistribution uniform(int states, int actions);

  double at(int s, int a) const {
    return probs[static_cast<std::size_t>(s) * num_actions + a];
  }
};

struct Transition {
  int state = 0;
  int action = 0;
  int next_state = 0;
};

/// Collection of (s, a, s') triples with per-cell tallies and, for fast
/// per-cell reductions, grouped successor lists in CSR form.
struct TransitionDataset {
  int num_states = 0;
  int num_actions = 0;
  std::uint64_t seed = 0;
  std::vector<Transition> triples;
  std::vector<int> counts;        // [s*A + a]
  std::vector<double> empirical;  // counts / size(), exact division
  std::vector<int> cell_offsets;  // CSR offsets, length S*A + 1
  std::vector<int> cell_next;     // successor states grouped by cell

  static TransitionDataset from_triples(int num_states, int num_actions,
                                        std::vector<Transition> triples,
                                        std::uint64_t seed = 0);

  int size() const { return static_cast<int>(triples.size()); }
  int count(int s, int a) const {
    return counts[static_cast<std::size_t>(s) * num_actions + a];
  }
  double empirical_at(int s, int a) const {
    return empirical[static_cast<std::size_t>(s) * num_actions + a];
  }
  /// Successor states observed in cell (s, a); pointer range into cell_next.
  std::pair<const int*, const int*> next_states(int s, int a) const {
    const std::size_t cell = static_cast<std::size_t>(s) * num_actions + a;
    return {cell_next.data() + cell_offsets[cell], cell_next.data() + cell_offsets[cell + 1]};
  }
};

/// Target and source domain. Both sides share rewards, discount, bound and
/// start distribution; only the transition tensors differ.
struct DomainPair {
  TabularMdp target;
  TabularMdp source;
  SamplingDistribution target_sa;
  SamplingDistribution source_sa;
};

/// Mixes every transition row with a seed-deterministic random stochastic
/// row: P'(.|s,a) = (1 - epsilon) * P(.|s,a) + epsilon * R(.|s,a).
/// The random rows depend on the seed only, so for a fixed seed the
/// perturbation scales continuously with epsilon.
TabularMdp perturb_dynamics(const TabularMdp& mdp, double epsilon, std::uint64_t seed);

/// Draws n triples: cell from sa_dist, successor from the MDP row.
TransitionDataset sample_dataset(const TabularMdp& mdp, const SamplingDistribution& sa_dist,
                                 int n, std::uint64_t seed);

struct CoverageReport {
  bool ok = true;
  std::vector<std::pair<int, int>> uncovered;
};

/// Every cell needs at least one sample for sample-mean terms to exist.
CoverageReport coverage_check(const TransitionDataset& dataset);

struct RatioBounds {
  double lower = 0.0;
  double upper = 0.0;
};

/// Envelope over the three cellwise ratio families dataset/source,
/// dataset/target and source/target. Requires full coverage so that every
/// ratio is positive and finite.
RatioBounds beta_bounds(const std::vector<double>& p_hat, const SamplingDistribution& source_sa,
                        const SamplingDistribution& target_sa);
RatioBounds beta_bounds(const TransitionDataset& dataset, const SamplingDistribution& source_sa,
                        const SamplingDistribution& target_sa);

}  // namespace mixbell
