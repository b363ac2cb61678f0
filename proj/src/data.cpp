#include "mixbell/data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mixbell/random.hpp"

namespace mixbell {

SamplingDistribution::SamplingDistribution(int states, int actions, std::vector<double> p)
    : num_states(states), num_actions(actions), probs(std::move(p)) {
  if (probs.size() != static_cast<std::size_t>(states) * actions) {
    throw std::invalid_argument("SamplingDistribution: wrong number of entries");
  }
  double sum = 0.0;
  for (double v : probs) {
    if (!(v > 0.0)) {
      throw std::invalid_argument("SamplingDistribution: entries must be strictly positive");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw std::invalid_argument("SamplingDistribution: entries must sum to one");
  }
}

SamplingDistribution SamplingDistribution::uniform(int states, int actions) {
  const int cells = states * actions;
  return SamplingDistribution(states, actions, std::vector<double>(cells, 1.0 / cells));
}

TransitionDataset TransitionDataset::from_triples(int num_states, int num_actions,
                                                  std::vector<Transition> triples,
                                                  std::uint64_t seed) {
  TransitionDataset d;
  d.num_states = num_states;
  d.num_actions = num_actions;
  d.seed = seed;
  d.triples = std::move(triples);

  const int cells = num_states * num_actions;
  d.counts.assign(cells, 0);
  for (const Transition& t : d.triples) {
    if (t.state < 0 || t.state >= num_states || t.action < 0 || t.action >= num_actions ||
        t.next_state < 0 || t.next_state >= num_states) {
      throw std::invalid_argument("TransitionDataset: triple index out of range");
    }
    ++d.counts[static_cast<std::size_t>(t.state) * num_actions + t.action];
  }

  const int n = d.size();
  d.empirical.assign(cells, 0.0);
  if (n > 0) {
    for (int c = 0; c < cells; ++c) d.empirical[c] = static_cast<double>(d.counts[c]) / n;
  }

  d.cell_offsets.assign(cells + 1, 0);
  for (int c = 0; c < cells; ++c) d.cell_offsets[c + 1] = d.cell_offsets[c] + d.counts[c];
  d.cell_next.assign(n, 0);
  std::vector<int> cursor(d.cell_offsets.begin(), d.cell_offsets.end() - 1);
  for (const Transition& t : d.triples) {
    const int c = t.state * num_actions + t.action;
    d.cell_next[cursor[c]++] = t.next_state;
  }
  return d;
}

TabularMdp perturb_dynamics(const TabularMdp& mdp, double epsilon, std::uint64_t seed) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw std::invalid_argument("perturb_dynamics: epsilon must lie in [0, 1]");
  }
  TabularMdp out = mdp;
  Rng rng(split_seed(seed, 0x70657274ULL));  // dedicated perturbation stream
  const int S = mdp.num_states;
  const int A = mdp.num_actions;
  std::vector<double> row(S);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      // Exponential weights normalized to a random stochastic row. Drawn
      // for every cell regardless of epsilon so the row only scales with
      // epsilon for a fixed seed.
      double total = 0.0;
      for (int sp = 0; sp < S; ++sp) {
        row[sp] = -std::log1p(-rng.uniform());
        total += row[sp];
      }
      for (int sp = 0; sp < S; ++sp) {
        out.transition_at(s, a, sp) =
            (1.0 - epsilon) * mdp.transition_at(s, a, sp) + epsilon * row[sp] / total;
      }
    }
  }
  return out;
}

TransitionDataset sample_dataset(const TabularMdp& mdp, const SamplingDistribution& sa_dist,
                                 int n, std::uint64_t seed) {
  if (sa_dist.num_states != mdp.num_states || sa_dist.num_actions != mdp.num_actions) {
    throw std::invalid_argument("sample_dataset: distribution shape does not match the MDP");
  }
  if (n < 0) throw std::invalid_argument("sample_dataset: n must be nonnegative");
  Rng rng(split_seed(seed, 0x64617461ULL));  // dedicated collection stream
  const int S = mdp.num_states;
  const int A = mdp.num_actions;
  std::vector<Transition> triples;
  triples.reserve(n);
  for (int i = 0; i < n; ++i) {
    const int cell = rng.categorical(sa_dist.probs);
    const int s = cell / A;
    const int a = cell % A;
    const int sp = rng.categorical(&mdp.transition[(static_cast<std::size_t>(s) * A + a) * S], S);
    triples.push_back({s, a, sp});
  }
  return TransitionDataset::from_triples(S, A, std::move(triples), seed);
}

CoverageReport coverage_check(const TransitionDataset& dataset) {
  CoverageReport report;
  for (int s = 0; s < dataset.num_states; ++s) {
    for (int a = 0; a < dataset.num_actions; ++a) {
      if (dataset.count(s, a) == 0) {
        report.ok = false;
        report.uncovered.emplace_back(s, a);
      }
    }
  }
  return report;
}

RatioBounds beta_bounds(const std::vector<double>& p_hat, const SamplingDistribution& source_sa,
                        const SamplingDistribution& target_sa) {
  if (source_sa.num_states != target_sa.num_states ||
      source_sa.num_actions != target_sa.num_actions ||
      p_hat.size() != source_sa.probs.size()) {
    throw std::invalid_argument("beta_bounds: shape mismatch");
  }
  RatioBounds b;
  b.lower = std::numeric_limits<double>::infinity();
  b.upper = 0.0;
  for (std::size_t c = 0; c < p_hat.size(); ++c) {
    if (!(p_hat[c] > 0.0)) {
      throw std::invalid_argument("beta_bounds: dataset must cover every cell");
    }
    const double ratios[3] = {p_hat[c] / source_sa.probs[c], p_hat[c] / target_sa.probs[c],
                              source_sa.probs[c] / target_sa.probs[c]};
    for (double r : ratios) {
      b.lower = std::min(b.lower, r);
      b.upper = std::max(b.upper, r);
    }
  }
  return b;
}

RatioBounds beta_bounds(const TransitionDataset& dataset, const SamplingDistribution& source_sa,
                        const SamplingDistribution& target_sa) {
  return beta_bounds(dataset.empirical, source_sa, target_sa);
}

}  // namespace mixbell
