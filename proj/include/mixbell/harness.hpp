#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mixbell/bounds.hpp"
#include "mixbell/data.hpp"
#include "mixbell/solver.hpp"

namespace mixbell {

/// Recipe for a seeded target/source family.
struct PairSpec {
  int num_states = 5;
  int num_actions = 3;
  double discount = 0.9;
  double reward_bound = 1.0;
  std::uint64_t reward_seed = 101;
  std::uint64_t dynamics_seed = 202;
  std::vector<double> epsilons = {0.0, 0.2, 0.5};
};

enum class EvalMetric { TdGap, PolicyReturn };

/// Everything a validation or sweep run depends on. Serialized verbatim
/// into the run directory; the directory name is a hash of this object.
struct ExperimentConfig {
  PairSpec pair;
  std::vector<int> dataset_sizes = {100, 400};
  std::vector<double> lambda_grid = {0.0, 0.2, 0.4, 0.5, 0.6, 0.8, 1.0};

  int one_step_resamples = 1000;  // datasets per expected one-step check
  int one_step_iterations = 3;    // comparator steps covered by one-step checks
  int high_prob_resamples = 2000; // datasets per violation-rate check
  int convergence_resamples = 200;
  int convergence_iterations = 50;
  double delta = 0.1;
  std::uint64_t master_seed = 20250822;
  EvalMetric eval_metric = EvalMetric::TdGap;
  int coverage_retry_cap = 100;

  // Sweep protocol: grid over (epsilon, n, lambda) per seeded family.
  int sweep_families = 20;
  int sweep_resamples = 200;
  int sweep_iterations = 15;
  std::vector<double> sweep_epsilons = {0.6, 0.3, 0.1};
  std::vector<int> sweep_sizes = {60, 240, 960};
  int sweep_trend_n = 240;          // fixed n for the epsilon trend
  double sweep_trend_epsilon = 0.3; // fixed epsilon for the size trend
};

ExperimentConfig default_config();
nlohmann::ordered_json config_to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json(const nlohmann::ordered_json& j);
/// Hex digest of the canonical config serialization.
std::string config_hash(const ExperimentConfig& config);

/// Target plus perturbed source built from a seeded recipe, uniform cell
/// sampling distributions on both sides.
DomainPair make_domain_pair(const PairSpec& recipe, double epsilon);

/// Seed-deterministic dense random MDP: dynamics rows and the start
/// distribution from dynamics_seed, rewards from reward_seed.
TabularMdp random_tabular_mdp(int num_states, int num_actions, double discount,
                              double reward_bound, std::uint64_t dynamics_seed,
                              std::uint64_t reward_seed);

/// Draws datasets until one covers every cell; derived retry seeds, error
/// past the cap.
TransitionDataset draw_covered_dataset(const TabularMdp& mdp, const SamplingDistribution& sa_dist,
                                       int n, std::uint64_t seed, int retry_cap);

/// One (epsilon, n, lambda, step) verdict of the expected one-step check:
/// Monte-Carlo mean of the excess TD error against the closed-form bound.
struct OneStepCell {
  double epsilon = 0.0;
  int n = 0;
  double lambda = 0.0;
  int step = 0;
  double lhs_mean = 0.0;
  double lhs_se = 0.0;
  double rhs_worst = 0.0;          // worst-case variance charge
  double rhs_realized_mean = 0.0;  // mean of per-dataset realized charges
  double gap = 0.0;
  double variance_worst = 0.0;
  double beta_lower = 0.0;  // envelope over the drawn datasets
  double beta_upper = 0.0;
  double lambda_star_numeric = 0.0;
  bool pass = false;
};

/// One verdict of the finite-sample check: fraction of resamples whose
/// realized excess error lands above the high-probability bound.
struct HighProbCell {
  double epsilon = 0.0;
  int n = 0;
  double lambda = 0.0;
  int step = 0;
  double violation_fraction = 0.0;
  double threshold = 0.0;  // delta + 3 * sqrt(delta (1-delta) / M)
  double rhs = 0.0;
  bool pass = false;
};

struct ConvergenceStep {
  int step = 0;            // iterate index
  double lhs_mean = 0.0;   // mean weighted absolute distance to the fixed point
  double lhs_se = 0.0;
  double lhs_sup_mean = 0.0;
  double rhs_analytic = 0.0;  // bound with the analytic deviation envelope
  double rhs_trace = 0.0;     // bound with trace-estimated envelopes
  bool pass = false;
};

struct ConvergenceCell {
  double epsilon = 0.0;
  int n = 0;
  double lambda = 0.0;
  std::vector<ConvergenceStep> steps;
  double neighborhood_analytic = 0.0;
  double neighborhood_trace = 0.0;
  double sigma_max_est = 0.0;
  double gap_max_est = 0.0;
  double beta_lower = 0.0;
  double beta_upper = 0.0;
  double init_dist_sup = 0.0;
  bool decay_checked = false;      // geometric-decay audit, lambda 1 and equal domains
  double worst_decay_ratio = 0.0;  // max_k sup-distance over gamma^k * initial distance
  bool pass = false;
};

struct BoundCheckReport {
  ExperimentConfig config;
  std::vector<OneStepCell> one_step;
  std::vector<HighProbCell> high_prob;
  std::vector<ConvergenceCell> convergence;
  bool all_pass = false;
};

std::vector<OneStepCell> check_one_step_bound(const DomainPair& pair, double epsilon,
                                              const ExperimentConfig& config, int jobs = 1);
std::vector<HighProbCell> check_high_probability_bound(const DomainPair& pair, double epsilon,
                                                       const ExperimentConfig& config,
                                                       int jobs = 1);
std::vector<ConvergenceCell> check_convergence_bound(const DomainPair& pair, double epsilon,
                                                     const ExperimentConfig& config,
                                                     int jobs = 1);
/// Runs all three checks over every epsilon in the config.
BoundCheckReport run_bound_checks(const ExperimentConfig& config, int jobs = 1);

struct SweepCell {
  double epsilon = 0.0;
  int n = 0;
  double lambda = 0.0;
  double metric_mean = 0.0;
  double metric_sd = 0.0;
  bool best = false;  // grid-best weight within its (epsilon, n) group
};

struct SweepBest {
  double epsilon = 0.0;
  int n = 0;
  double lambda = 0.0;
};

struct SweepReport {
  int family_index = 0;
  std::vector<SweepCell> cells;
  std::vector<SweepBest> best;
};

/// Full (epsilon, n, lambda) grid for one seeded family. Grid-best weights
/// break ties toward the smaller weight.
SweepReport sweep(const ExperimentConfig& config, int family_index, int jobs = 1);

struct FamilyTrend {
  int family_index = 0;
  std::vector<double> best_by_epsilon;  // epsilons descending, fixed trend n
  std::vector<double> best_by_size;     // sizes ascending, fixed trend epsilon
  bool epsilon_monotone = false;        // non-decreasing as epsilon falls
  bool size_monotone = false;           // non-increasing as n grows
};

struct TrendSummary {
  std::vector<SweepReport> sweeps;
  std::vector<FamilyTrend> families;
  std::vector<double> epsilon_axis;  // descending, anchored at trend_n
  std::vector<int> size_axis;        // ascending, anchored at trend_epsilon
  double epsilon_fraction = 0.0;
  double size_fraction = 0.0;
};

/// Runs sweep_families sweeps and scores the two monotone-trend fractions.
TrendSummary sweep_trends(const ExperimentConfig& config, int jobs = 1);

struct ReportBundle {
  std::optional<BoundCheckReport> bound_check;
  std::vector<SweepReport> sweeps;
  std::optional<TrendSummary> trends;
};

nlohmann::ordered_json bound_check_to_json(const BoundCheckReport& report);

/// Writes every report in the bundle under out_dir with deterministic
/// bytes; returns the created paths. An empty bundle writes nothing.
std::vector<std::filesystem::path> emit_reports(const ReportBundle& bundle,
                                                const std::filesystem::path& out_dir);

/// Root directory for run outputs: the MIXBELL_OUT_DIR environment
/// variable when set, otherwise ./runs.
std::filesystem::path default_out_root();

}  // namespace mixbell
