#include "mixbell/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "mixbell/io.hpp"
#include "mixbell/random.hpp"

namespace mixbell {

namespace {

using nlohmann::ordered_json;

// Stream tags keeping every sampling site on its own child-seed lane.
constexpr std::uint64_t kDynamicsStream = 0x64796e32ULL;
constexpr std::uint64_t kRewardStream = 0x72657731ULL;
constexpr std::uint64_t kOneStepStream = 0x6f6e6573ULL;
constexpr std::uint64_t kHighProbStream = 0x68697072ULL;
constexpr std::uint64_t kConvergenceStream = 0x636f6e76ULL;
constexpr std::uint64_t kSweepStream = 0x73776565ULL;
constexpr std::uint64_t kFamilyRewardStream = 0x66616d72ULL;
constexpr std::uint64_t kFamilyDynamicsStream = 0x66616d64ULL;

void parallel_for(int count, int jobs, const std::function<void(int)>& body) {
  if (jobs <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  const int workers = std::min(jobs, count);
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const int i = next.fetch_add(1);
        if (i >= count) return;
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

double mean_of(const std::vector<double>& xs) {
  double acc = 0.0;
  for (double x : xs) acc += x;
  return xs.empty() ? 0.0 : acc / xs.size();
}

double se_of(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / (xs.size() - 1) / xs.size());
}

void fill_simplex(Rng& rng, double* out, int n) {
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    out[i] = -std::log1p(-rng.uniform());
    total += out[i];
  }
  for (int i = 0; i < n; ++i) out[i] /= total;
}

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void validate_config(const ExperimentConfig& c) {
  require(c.pair.num_states > 0 && c.pair.num_actions > 0, "config: table shape must be positive");
  require(c.pair.discount >= 0.0 && c.pair.discount < 1.0, "config: discount must lie in [0, 1)");
  require(c.pair.reward_bound > 0.0, "config: reward bound must be positive");
  require(!c.pair.epsilons.empty(), "config: epsilon list is empty");
  for (double e : c.pair.epsilons) require(e >= 0.0 && e <= 1.0, "config: epsilon outside [0, 1]");
  require(!c.dataset_sizes.empty(), "config: dataset size list is empty");
  for (int n : c.dataset_sizes) require(n > 0, "config: dataset sizes must be positive");
  require(!c.lambda_grid.empty(), "config: weight grid is empty");
  for (double l : c.lambda_grid) require(l >= 0.0 && l <= 1.0, "config: weight outside [0, 1]");
  require(c.one_step_resamples > 0, "config: one_step_resamples must be positive");
  require(c.one_step_iterations > 0, "config: one_step_iterations must be positive");
  require(c.high_prob_resamples > 0, "config: high_prob_resamples must be positive");
  require(c.convergence_resamples > 0, "config: convergence_resamples must be positive");
  require(c.convergence_iterations > 0, "config: convergence_iterations must be positive");
  require(c.delta > 0.0 && c.delta < 1.0, "config: delta must lie in (0, 1)");
  require(c.coverage_retry_cap > 0, "config: coverage_retry_cap must be positive");
  require(c.sweep_families > 0, "config: sweep_families must be positive");
  require(c.sweep_resamples > 0, "config: sweep_resamples must be positive");
  require(c.sweep_iterations > 0, "config: sweep_iterations must be positive");
  require(!c.sweep_epsilons.empty(), "config: sweep epsilon list is empty");
  for (double e : c.sweep_epsilons) {
    require(e >= 0.0 && e <= 1.0, "config: sweep epsilon outside [0, 1]");
  }
  require(!c.sweep_sizes.empty(), "config: sweep size list is empty");
  for (int n : c.sweep_sizes) require(n > 0, "config: sweep sizes must be positive");
  require(std::count(c.sweep_sizes.begin(), c.sweep_sizes.end(), c.sweep_trend_n) > 0,
          "config: sweep_trend_n must appear in the sweep size list");
  require(std::count(c.sweep_epsilons.begin(), c.sweep_epsilons.end(), c.sweep_trend_epsilon) > 0,
          "config: sweep_trend_epsilon must appear in the sweep epsilon list");
}

/// Shared resampling pass: draws M covered datasets from the target and
/// evaluates the exact excess TD error of one weighted step per grid
/// weight, together with per-dataset ratio envelopes and realized
/// variance charges.
struct ResamplePass {
  std::vector<RatioBounds> betas;              // per dataset
  std::vector<double> realized_var;            // per dataset
  std::vector<std::vector<double>> lhs;        // [weight][dataset]
  RatioBounds envelope;
};

ResamplePass one_step_resample(const DomainPair& pair, const QTable& q_k, int n, int step,
                               std::uint64_t stream, const ExperimentConfig& config, int samples,
                               int jobs) {
  const OperatorMode mode = OperatorMode::optimality();
  const QTable comparator_next = target_update(q_k, pair.target, mode);
  const double base_td =
      expected_td_error(comparator_next, q_k, pair.target, pair.target_sa, mode);

  ResamplePass pass;
  pass.betas.resize(samples);
  pass.realized_var.resize(samples);
  pass.lhs.assign(config.lambda_grid.size(), std::vector<double>(samples, 0.0));

  parallel_for(samples, jobs, [&](int m) {
    const std::uint64_t seed =
        split_seed(config.master_seed, stream, static_cast<std::uint64_t>(n),
                   static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(m));
    const TransitionDataset dataset = draw_covered_dataset(pair.target, pair.target_sa, n, seed,
                                                           config.coverage_retry_cap);
    pass.betas[m] = beta_bounds(dataset, pair.source_sa, pair.target_sa);
    pass.realized_var[m] = realized_normalized_variance(q_k, pair.target, dataset.counts, mode);
    for (std::size_t li = 0; li < config.lambda_grid.size(); ++li) {
      const QTable q_weighted = weighted_update(q_k, dataset, pair.source, pair.source_sa,
                                                config.lambda_grid[li], mode);
      pass.lhs[li][m] =
          expected_td_error(q_weighted, q_k, pair.target, pair.target_sa, mode) - base_td;
    }
  });

  pass.envelope.lower = std::numeric_limits<double>::infinity();
  pass.envelope.upper = 0.0;
  for (const RatioBounds& b : pass.betas) {
    pass.envelope.lower = std::min(pass.envelope.lower, b.lower);
    pass.envelope.upper = std::max(pass.envelope.upper, b.upper);
  }
  return pass;
}

std::string metric_name(EvalMetric metric) {
  return metric == EvalMetric::TdGap ? "td_gap" : "policy_return";
}

EvalMetric metric_from_name(const std::string& name) {
  if (name == "td_gap") return EvalMetric::TdGap;
  if (name == "policy_return") return EvalMetric::PolicyReturn;
  throw std::invalid_argument("config: unknown eval metric " + name);
}

}  // namespace

ExperimentConfig default_config() { return ExperimentConfig{}; }

ordered_json config_to_json(const ExperimentConfig& config) {
  ordered_json pair;
  pair["num_states"] = config.pair.num_states;
  pair["num_actions"] = config.pair.num_actions;
  pair["discount"] = config.pair.discount;
  pair["reward_bound"] = config.pair.reward_bound;
  pair["reward_seed"] = config.pair.reward_seed;
  pair["dynamics_seed"] = config.pair.dynamics_seed;
  pair["epsilons"] = config.pair.epsilons;

  ordered_json sweep;
  sweep["families"] = config.sweep_families;
  sweep["resamples"] = config.sweep_resamples;
  sweep["iterations"] = config.sweep_iterations;
  sweep["epsilons"] = config.sweep_epsilons;
  sweep["dataset_sizes"] = config.sweep_sizes;
  sweep["trend_n"] = config.sweep_trend_n;
  sweep["trend_epsilon"] = config.sweep_trend_epsilon;

  ordered_json j;
  j["pair"] = std::move(pair);
  j["dataset_sizes"] = config.dataset_sizes;
  j["lambda_grid"] = config.lambda_grid;
  j["one_step_resamples"] = config.one_step_resamples;
  j["one_step_iterations"] = config.one_step_iterations;
  j["high_prob_resamples"] = config.high_prob_resamples;
  j["convergence_resamples"] = config.convergence_resamples;
  j["convergence_iterations"] = config.convergence_iterations;
  j["delta"] = config.delta;
  j["master_seed"] = config.master_seed;
  j["eval_metric"] = metric_name(config.eval_metric);
  j["coverage_retry_cap"] = config.coverage_retry_cap;
  j["sweep"] = std::move(sweep);
  return j;
}

ExperimentConfig config_from_json(const ordered_json& j) {
  ExperimentConfig c;
  if (j.contains("pair")) {
    const auto& p = j.at("pair");
    c.pair.num_states = p.value("num_states", c.pair.num_states);
    c.pair.num_actions = p.value("num_actions", c.pair.num_actions);
    c.pair.discount = p.value("discount", c.pair.discount);
    c.pair.reward_bound = p.value("reward_bound", c.pair.reward_bound);
    c.pair.reward_seed = p.value("reward_seed", c.pair.reward_seed);
    c.pair.dynamics_seed = p.value("dynamics_seed", c.pair.dynamics_seed);
    c.pair.epsilons = p.value("epsilons", c.pair.epsilons);
  }
  c.dataset_sizes = j.value("dataset_sizes", c.dataset_sizes);
  c.lambda_grid = j.value("lambda_grid", c.lambda_grid);
  c.one_step_resamples = j.value("one_step_resamples", c.one_step_resamples);
  c.one_step_iterations = j.value("one_step_iterations", c.one_step_iterations);
  c.high_prob_resamples = j.value("high_prob_resamples", c.high_prob_resamples);
  c.convergence_resamples = j.value("convergence_resamples", c.convergence_resamples);
  c.convergence_iterations = j.value("convergence_iterations", c.convergence_iterations);
  c.delta = j.value("delta", c.delta);
  c.master_seed = j.value("master_seed", c.master_seed);
  c.eval_metric = metric_from_name(j.value("eval_metric", metric_name(c.eval_metric)));
  c.coverage_retry_cap = j.value("coverage_retry_cap", c.coverage_retry_cap);
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    c.sweep_families = s.value("families", c.sweep_families);
    c.sweep_resamples = s.value("resamples", c.sweep_resamples);
    c.sweep_iterations = s.value("iterations", c.sweep_iterations);
    c.sweep_epsilons = s.value("epsilons", c.sweep_epsilons);
    c.sweep_sizes = s.value("dataset_sizes", c.sweep_sizes);
    c.sweep_trend_n = s.value("trend_n", c.sweep_trend_n);
    c.sweep_trend_epsilon = s.value("trend_epsilon", c.sweep_trend_epsilon);
  }
  validate_config(c);
  return c;
}

std::string config_hash(const ExperimentConfig& config) {
  return hash_hex(fnv1a_hash(config_to_json(config).dump()));
}

TabularMdp random_tabular_mdp(int num_states, int num_actions, double discount,
                              double reward_bound, std::uint64_t dynamics_seed,
                              std::uint64_t reward_seed) {
  require(num_states > 0 && num_actions > 0, "random_tabular_mdp: shape must be positive");
  require(discount >= 0.0 && discount < 1.0, "random_tabular_mdp: discount must lie in [0, 1)");
  require(reward_bound > 0.0, "random_tabular_mdp: reward bound must be positive");

  TabularMdp mdp(num_states, num_actions, discount, reward_bound);
  Rng dynamics(split_seed(dynamics_seed, kDynamicsStream));
  for (int s = 0; s < num_states; ++s) {
    for (int a = 0; a < num_actions; ++a) {
      fill_simplex(dynamics, &mdp.transition[(static_cast<std::size_t>(s) * num_actions + a) *
                                             num_states],
                   num_states);
    }
  }
  fill_simplex(dynamics, mdp.initial_dist.data(), num_states);

  Rng rewards(split_seed(reward_seed, kRewardStream));
  for (double& r : mdp.reward) {
    double draw = reward_bound * (2.0 * rewards.uniform() - 1.0);
    while (!(std::abs(draw) < reward_bound)) {
      draw = reward_bound * (2.0 * rewards.uniform() - 1.0);
    }
    r = draw;
  }
  return mdp;
}

DomainPair make_domain_pair(const PairSpec& recipe, double epsilon) {
  DomainPair pair;
  pair.target = random_tabular_mdp(recipe.num_states, recipe.num_actions, recipe.discount,
                                   recipe.reward_bound, recipe.dynamics_seed, recipe.reward_seed);
  pair.source = perturb_dynamics(pair.target, epsilon, recipe.dynamics_seed);
  pair.target_sa = SamplingDistribution::uniform(recipe.num_states, recipe.num_actions);
  pair.source_sa = SamplingDistribution::uniform(recipe.num_states, recipe.num_actions);
  return pair;
}

TransitionDataset draw_covered_dataset(const TabularMdp& mdp, const SamplingDistribution& sa_dist,
                                       int n, std::uint64_t seed, int retry_cap) {
  for (int attempt = 0; attempt < retry_cap; ++attempt) {
    TransitionDataset dataset = sample_dataset(mdp, sa_dist, n, split_seed(seed, attempt));
    if (coverage_check(dataset).ok) return dataset;
  }
  std::ostringstream msg;
  msg << "draw_covered_dataset: no covering draw of size " << n << " within " << retry_cap
      << " attempts";
  throw std::runtime_error(msg.str());
}

std::vector<OneStepCell> check_one_step_bound(const DomainPair& pair, double epsilon,
                                              const ExperimentConfig& config, int jobs) {
  const OperatorMode mode = OperatorMode::optimality();
  std::vector<OneStepCell> cells;
  for (int n : config.dataset_sizes) {
    QTable q(pair.target.num_states, pair.target.num_actions, 0.0);
    for (int step = 1; step <= config.one_step_iterations; ++step) {
      q = target_update(q, pair.target, mode);
      const double gap = dynamics_gap(q, pair.target, pair.source, mode);
      const double var_worst = worst_case_normalized_variance(q, pair.target, mode);
      const ResamplePass pass = one_step_resample(pair, q, n, step, kOneStepStream, config,
                                                  config.one_step_resamples, jobs);

      BoundInputs in;
      in.variance_term = var_worst;
      in.gap = gap;
      in.beta_lower = pass.envelope.lower;
      in.beta_upper = pass.envelope.upper;
      in.num_states = pair.target.num_states;
      in.num_actions = pair.target.num_actions;
      in.dataset_size = n;
      in.delta = config.delta;
      in.reward_bound = pair.target.reward_bound;
      in.discount = pair.target.discount;
      const double lambda_star = optimal_lambda_numeric(in, 1e-8);

      for (std::size_t li = 0; li < config.lambda_grid.size(); ++li) {
        OneStepCell cell;
        cell.epsilon = epsilon;
        cell.n = n;
        cell.lambda = config.lambda_grid[li];
        cell.step = step;
        cell.lhs_mean = mean_of(pass.lhs[li]);
        cell.lhs_se = se_of(pass.lhs[li], cell.lhs_mean);
        in.lambda = cell.lambda;
        cell.rhs_worst = expected_bound(in);
        double realized_acc = 0.0;
        for (double rv : pass.realized_var) {
          BoundInputs realized = in;
          realized.variance_term = rv;
          realized_acc += expected_bound(realized);
        }
        cell.rhs_realized_mean = realized_acc / pass.realized_var.size();
        cell.gap = gap;
        cell.variance_worst = var_worst;
        cell.beta_lower = pass.envelope.lower;
        cell.beta_upper = pass.envelope.upper;
        cell.lambda_star_numeric = lambda_star;
        cell.pass = cell.lhs_mean <= cell.rhs_worst + 3.0 * cell.lhs_se;
        cells.push_back(cell);
      }
    }
  }
  return cells;
}

std::vector<HighProbCell> check_high_probability_bound(const DomainPair& pair, double epsilon,
                                                       const ExperimentConfig& config, int jobs) {
  const OperatorMode mode = OperatorMode::optimality();
  std::vector<HighProbCell> cells;
  const int samples = config.high_prob_resamples;
  const double threshold =
      config.delta + 3.0 * std::sqrt(config.delta * (1.0 - config.delta) / samples);
  for (int n : config.dataset_sizes) {
    QTable q(pair.target.num_states, pair.target.num_actions, 0.0);
    for (int step = 1; step <= config.one_step_iterations; ++step) {
      q = target_update(q, pair.target, mode);
      const double gap = dynamics_gap(q, pair.target, pair.source, mode);
      const double var_worst = worst_case_normalized_variance(q, pair.target, mode);
      const ResamplePass pass = one_step_resample(pair, q, n, step, kHighProbStream, config,
                                                  samples, jobs);

      BoundInputs in;
      in.variance_term = var_worst;
      in.gap = gap;
      in.beta_lower = pass.envelope.lower;
      in.beta_upper = pass.envelope.upper;
      in.num_states = pair.target.num_states;
      in.num_actions = pair.target.num_actions;
      in.dataset_size = n;
      in.delta = config.delta;
      in.reward_bound = pair.target.reward_bound;
      in.discount = pair.target.discount;

      for (std::size_t li = 0; li < config.lambda_grid.size(); ++li) {
        HighProbCell cell;
        cell.epsilon = epsilon;
        cell.n = n;
        cell.lambda = config.lambda_grid[li];
        cell.step = step;
        in.lambda = cell.lambda;
        cell.rhs = worst_case_bound(in);
        int violations = 0;
        for (double lhs : pass.lhs[li]) {
          if (lhs > cell.rhs) ++violations;
        }
        cell.violation_fraction = static_cast<double>(violations) / samples;
        cell.threshold = threshold;
        cell.pass = cell.violation_fraction <= threshold;
        cells.push_back(cell);
      }
    }
  }
  return cells;
}

std::vector<ConvergenceCell> check_convergence_bound(const DomainPair& pair, double epsilon,
                                                     const ExperimentConfig& config, int jobs) {
  const OperatorMode mode = OperatorMode::optimality();
  const QTable q_star = optimal_q(pair.target, 1e-12);
  const double init_sup = sup_norm(q_star);  // iterates start from the zero table
  const int iterations = config.convergence_iterations;
  const int samples = config.convergence_resamples;
  const double sigma_analytic =
      sigma_max_analytic(pair.target.reward_bound, pair.target.discount);

  std::vector<ConvergenceCell> cells;
  for (int n : config.dataset_sizes) {
    // Datasets are shared across the weight grid.
    std::vector<TransitionDataset> datasets(samples);
    parallel_for(samples, jobs, [&](int m) {
      const std::uint64_t seed = split_seed(config.master_seed, kConvergenceStream,
                                            static_cast<std::uint64_t>(n),
                                            static_cast<std::uint64_t>(m));
      datasets[m] = draw_covered_dataset(pair.target, pair.target_sa, n, seed,
                                         config.coverage_retry_cap);
    });
    RatioBounds envelope;
    envelope.lower = std::numeric_limits<double>::infinity();
    envelope.upper = 0.0;
    for (const TransitionDataset& d : datasets) {
      const RatioBounds b = beta_bounds(d, pair.source_sa, pair.target_sa);
      envelope.lower = std::min(envelope.lower, b.lower);
      envelope.upper = std::max(envelope.upper, b.upper);
    }

    for (double lambda : config.lambda_grid) {
      std::vector<std::vector<double>> expabs(samples), sup(samples);
      std::vector<TraceMaxima> maxima(samples);
      parallel_for(samples, jobs, [&](int m) {
        SolveConfig sc;
        sc.lambda = lambda;
        sc.mode = mode;
        sc.num_iterations = iterations;
        const SolveTrace trace = run_fqi(pair, datasets[m], sc, &q_star);
        expabs[m].resize(iterations);
        sup[m].resize(iterations);
        for (int k = 0; k < iterations; ++k) {
          expabs[m][k] = trace.diagnostics[k].dist_expabs;
          sup[m][k] = trace.diagnostics[k].dist_sup;
        }
        maxima[m] = trace_maxima(trace, pair, datasets[m], mode);
      });

      ConvergenceCell cell;
      cell.epsilon = epsilon;
      cell.n = n;
      cell.lambda = lambda;
      cell.beta_lower = envelope.lower;
      cell.beta_upper = envelope.upper;
      cell.init_dist_sup = init_sup;
      for (const TraceMaxima& m : maxima) {
        cell.sigma_max_est = std::max(cell.sigma_max_est, m.sigma_max_est);
        cell.gap_max_est = std::max(cell.gap_max_est, m.gap_max_est);
      }

      bool all_steps_pass = true;
      std::vector<double> column(samples);
      for (int k = 1; k <= iterations; ++k) {
        for (int m = 0; m < samples; ++m) column[m] = expabs[m][k - 1];
        ConvergenceStep step;
        step.step = k;
        step.lhs_mean = mean_of(column);
        step.lhs_se = se_of(column, step.lhs_mean);
        double sup_acc = 0.0;
        for (int m = 0; m < samples; ++m) sup_acc += sup[m][k - 1];
        step.lhs_sup_mean = sup_acc / samples;

        ConvergenceInputs ci;
        ci.lambda = lambda;
        ci.beta_lower = envelope.lower;
        ci.beta_upper = envelope.upper;
        ci.discount = pair.target.discount;
        ci.gap_max = cell.gap_max_est;
        ci.init_dist_term = init_sup;
        ci.step = k - 1;
        ci.sigma_max = sigma_analytic;
        step.rhs_analytic = convergence_bound(ci);
        ci.sigma_max = cell.sigma_max_est;
        step.rhs_trace = convergence_bound(ci);
        step.pass = step.lhs_mean <= step.rhs_analytic + 3.0 * step.lhs_se;
        all_steps_pass = all_steps_pass && step.pass;
        cell.steps.push_back(step);
      }

      cell.neighborhood_analytic = limit_neighborhood(lambda, envelope.lower, envelope.upper,
                                                      pair.target.discount, sigma_analytic,
                                                      cell.gap_max_est);
      cell.neighborhood_trace = limit_neighborhood(lambda, envelope.lower, envelope.upper,
                                                   pair.target.discount, cell.sigma_max_est,
                                                   cell.gap_max_est);
      const ConvergenceStep& last = cell.steps.back();
      // The neighborhood is the k -> infinity radius; after K steps the
      // initial distance may still contribute its decayed remainder.
      const double geometric_tail = std::pow(pair.target.discount, iterations) * init_sup;
      const bool final_ok =
          last.lhs_mean <= cell.neighborhood_analytic + geometric_tail + 3.0 * last.lhs_se;

      bool decay_ok = true;
      if (lambda == 1.0 && epsilon == 0.0 && init_sup > 0.0) {
        cell.decay_checked = true;
        double worst = 0.0;
        double geometric = init_sup;
        for (int k = 1; k <= iterations; ++k) {
          geometric *= pair.target.discount;
          if (geometric > 0.0) {
            worst = std::max(worst, cell.steps[k - 1].lhs_sup_mean / geometric);
          }
        }
        cell.worst_decay_ratio = worst;
        decay_ok = worst <= 1.01;
      }
      cell.pass = all_steps_pass && final_ok && decay_ok;
      cells.push_back(cell);
    }
  }
  return cells;
}

BoundCheckReport run_bound_checks(const ExperimentConfig& config, int jobs) {
  validate_config(config);
  BoundCheckReport report;
  report.config = config;
  report.all_pass = true;
  for (double epsilon : config.pair.epsilons) {
    const DomainPair pair = make_domain_pair(config.pair, epsilon);
    for (OneStepCell& cell : check_one_step_bound(pair, epsilon, config, jobs)) {
      report.all_pass = report.all_pass && cell.pass;
      report.one_step.push_back(std::move(cell));
    }
    for (HighProbCell& cell : check_high_probability_bound(pair, epsilon, config, jobs)) {
      report.all_pass = report.all_pass && cell.pass;
      report.high_prob.push_back(std::move(cell));
    }
    for (ConvergenceCell& cell : check_convergence_bound(pair, epsilon, config, jobs)) {
      report.all_pass = report.all_pass && cell.pass;
      report.convergence.push_back(std::move(cell));
    }
  }
  return report;
}

SweepReport sweep(const ExperimentConfig& config, int family_index, int jobs) {
  validate_config(config);
  const OperatorMode mode = OperatorMode::optimality();
  const std::uint64_t reward_seed =
      split_seed(config.master_seed, kFamilyRewardStream, family_index);
  const std::uint64_t dynamics_seed =
      split_seed(config.master_seed, kFamilyDynamicsStream, family_index);
  const TabularMdp target =
      random_tabular_mdp(config.pair.num_states, config.pair.num_actions, config.pair.discount,
                         config.pair.reward_bound, dynamics_seed, reward_seed);
  const SamplingDistribution uniform =
      SamplingDistribution::uniform(config.pair.num_states, config.pair.num_actions);

  std::vector<DomainPair> pairs;
  pairs.reserve(config.sweep_epsilons.size());
  for (double epsilon : config.sweep_epsilons) {
    DomainPair pair;
    pair.target = target;
    pair.source = perturb_dynamics(target, epsilon, dynamics_seed);
    pair.target_sa = uniform;
    pair.source_sa = uniform;
    pairs.push_back(std::move(pair));
  }

  const std::size_t num_eps = config.sweep_epsilons.size();
  const std::size_t num_sizes = config.sweep_sizes.size();
  const std::size_t num_weights = config.lambda_grid.size();
  SweepReport report;
  report.family_index = family_index;
  report.cells.assign(num_eps * num_sizes * num_weights, SweepCell{});

  for (std::size_t ni = 0; ni < num_sizes; ++ni) {
    const int n = config.sweep_sizes[ni];
    // Datasets are drawn from the target only, so they are shared across
    // both the epsilon axis and the weight grid.
    std::vector<TransitionDataset> datasets(config.sweep_resamples);
    parallel_for(config.sweep_resamples, jobs, [&](int m) {
      const std::uint64_t seed = split_seed(config.master_seed, kSweepStream,
                                            static_cast<std::uint64_t>(family_index),
                                            static_cast<std::uint64_t>(n),
                                            static_cast<std::uint64_t>(m));
      datasets[m] = draw_covered_dataset(target, uniform, n, seed, config.coverage_retry_cap);
    });

    for (std::size_t ei = 0; ei < num_eps; ++ei) {
      for (std::size_t li = 0; li < num_weights; ++li) {
        std::vector<double> metric(config.sweep_resamples);
        parallel_for(config.sweep_resamples, jobs, [&](int m) {
          SolveConfig sc;
          sc.lambda = config.lambda_grid[li];
          sc.mode = mode;
          sc.num_iterations = config.sweep_iterations;
          const SolveTrace trace = run_fqi(pairs[ei], datasets[m], sc);
          if (config.eval_metric == EvalMetric::TdGap) {
            metric[m] = trace.diagnostics.back().exact_td_target;
          } else {
            metric[m] = policy_value(pairs[ei].target, greedy_policy(trace.q_history.back()));
          }
        });
        SweepCell cell;
        cell.epsilon = config.sweep_epsilons[ei];
        cell.n = n;
        cell.lambda = config.lambda_grid[li];
        cell.metric_mean = mean_of(metric);
        cell.metric_sd = se_of(metric, cell.metric_mean) * std::sqrt(config.sweep_resamples);
        report.cells[(ei * num_sizes + ni) * num_weights + li] = cell;
      }
    }
  }

  // Grid-best weight per (epsilon, n); strict comparisons keep ties on the
  // smaller weight.
  for (std::size_t ei = 0; ei < num_eps; ++ei) {
    for (std::size_t ni = 0; ni < num_sizes; ++ni) {
      std::size_t best_li = 0;
      for (std::size_t li = 1; li < num_weights; ++li) {
        const double candidate =
            report.cells[(ei * num_sizes + ni) * num_weights + li].metric_mean;
        const double incumbent =
            report.cells[(ei * num_sizes + ni) * num_weights + best_li].metric_mean;
        const bool better = config.eval_metric == EvalMetric::TdGap ? candidate < incumbent
                                                                    : candidate > incumbent;
        if (better) best_li = li;
      }
      report.cells[(ei * num_sizes + ni) * num_weights + best_li].best = true;
      SweepBest best;
      best.epsilon = config.sweep_epsilons[ei];
      best.n = config.sweep_sizes[ni];
      best.lambda = config.lambda_grid[best_li];
      report.best.push_back(best);
    }
  }
  return report;
}

TrendSummary sweep_trends(const ExperimentConfig& config, int jobs) {
  validate_config(config);
  TrendSummary summary;
  for (int f = 0; f < config.sweep_families; ++f) {
    summary.sweeps.push_back(sweep(config, f, jobs));
  }

  std::vector<double> eps_desc = config.sweep_epsilons;
  std::sort(eps_desc.begin(), eps_desc.end(), std::greater<double>());
  std::vector<int> sizes_asc = config.sweep_sizes;
  std::sort(sizes_asc.begin(), sizes_asc.end());
  summary.epsilon_axis = eps_desc;
  summary.size_axis = sizes_asc;

  int epsilon_ok = 0;
  int size_ok = 0;
  for (const SweepReport& report : summary.sweeps) {
    const auto best_at = [&report](double epsilon, int n) {
      for (const SweepBest& b : report.best) {
        if (b.epsilon == epsilon && b.n == n) return b.lambda;
      }
      throw std::logic_error("sweep_trends: missing grid-best entry");
    };

    FamilyTrend trend;
    trend.family_index = report.family_index;
    for (double epsilon : eps_desc) {
      trend.best_by_epsilon.push_back(best_at(epsilon, config.sweep_trend_n));
    }
    for (int n : sizes_asc) {
      trend.best_by_size.push_back(best_at(config.sweep_trend_epsilon, n));
    }
    trend.epsilon_monotone =
        std::is_sorted(trend.best_by_epsilon.begin(), trend.best_by_epsilon.end());
    trend.size_monotone = std::is_sorted(trend.best_by_size.begin(), trend.best_by_size.end(),
                                         std::greater<double>());
    epsilon_ok += trend.epsilon_monotone ? 1 : 0;
    size_ok += trend.size_monotone ? 1 : 0;
    summary.families.push_back(std::move(trend));
  }
  summary.epsilon_fraction = static_cast<double>(epsilon_ok) / config.sweep_families;
  summary.size_fraction = static_cast<double>(size_ok) / config.sweep_families;
  return summary;
}

ordered_json bound_check_to_json(const BoundCheckReport& report) {
  ordered_json j;
  j["config"] = config_to_json(report.config);
  j["config_hash"] = config_hash(report.config);

  ordered_json one_step = ordered_json::array();
  for (const OneStepCell& c : report.one_step) {
    ordered_json cell;
    cell["epsilon"] = c.epsilon;
    cell["n"] = c.n;
    cell["lambda"] = c.lambda;
    cell["step"] = c.step;
    cell["lhs_mean"] = c.lhs_mean;
    cell["lhs_se"] = c.lhs_se;
    cell["rhs_worst_case"] = c.rhs_worst;
    cell["rhs_realized_mean"] = c.rhs_realized_mean;
    cell["gap"] = c.gap;
    cell["variance_worst_case"] = c.variance_worst;
    cell["beta_lower"] = c.beta_lower;
    cell["beta_upper"] = c.beta_upper;
    cell["lambda_star_numeric"] = c.lambda_star_numeric;
    if (c.beta_lower == c.beta_upper && (c.variance_worst > 0.0 || c.gap > 0.0)) {
      cell["lambda_star_closed"] = optimal_lambda_closed(c.beta_lower, c.variance_worst, c.gap);
    } else {
      cell["lambda_star_closed"] = nullptr;
    }
    cell["pass"] = c.pass;
    one_step.push_back(std::move(cell));
  }
  j["one_step"] = std::move(one_step);

  ordered_json high_prob = ordered_json::array();
  for (const HighProbCell& c : report.high_prob) {
    ordered_json cell;
    cell["epsilon"] = c.epsilon;
    cell["n"] = c.n;
    cell["lambda"] = c.lambda;
    cell["step"] = c.step;
    cell["violation_fraction"] = c.violation_fraction;
    cell["threshold"] = c.threshold;
    cell["rhs"] = c.rhs;
    cell["pass"] = c.pass;
    high_prob.push_back(std::move(cell));
  }
  j["high_probability"] = std::move(high_prob);

  ordered_json convergence = ordered_json::array();
  for (const ConvergenceCell& c : report.convergence) {
    ordered_json cell;
    cell["epsilon"] = c.epsilon;
    cell["n"] = c.n;
    cell["lambda"] = c.lambda;
    cell["beta_lower"] = c.beta_lower;
    cell["beta_upper"] = c.beta_upper;
    cell["sigma_max_estimate"] = c.sigma_max_est;
    cell["gap_max_estimate"] = c.gap_max_est;
    cell["init_dist_sup"] = c.init_dist_sup;
    cell["neighborhood_analytic"] = c.neighborhood_analytic;
    cell["neighborhood_trace"] = c.neighborhood_trace;
    cell["decay_checked"] = c.decay_checked;
    cell["worst_decay_ratio"] = c.worst_decay_ratio;
    ordered_json steps = ordered_json::array();
    for (const ConvergenceStep& s : c.steps) {
      ordered_json step;
      step["step"] = s.step;
      step["lhs_mean"] = s.lhs_mean;
      step["lhs_se"] = s.lhs_se;
      step["lhs_sup_mean"] = s.lhs_sup_mean;
      step["rhs_analytic"] = s.rhs_analytic;
      step["rhs_trace"] = s.rhs_trace;
      step["pass"] = s.pass;
      steps.push_back(std::move(step));
    }
    cell["steps"] = std::move(steps);
    cell["pass"] = c.pass;
    convergence.push_back(std::move(cell));
  }
  j["convergence"] = std::move(convergence);
  j["all_pass"] = report.all_pass;
  return j;
}

std::vector<std::filesystem::path> emit_reports(const ReportBundle& bundle,
                                                const std::filesystem::path& out_dir) {
  std::vector<std::filesystem::path> written;
  if (bundle.bound_check) {
    const auto path = out_dir / "bound_check.json";
    write_text_file(path, bound_check_to_json(*bundle.bound_check).dump(2) + "\n");
    written.push_back(path);
    const auto config_path = out_dir / "config.json";
    write_text_file(config_path, config_to_json(bundle.bound_check->config).dump(2) + "\n");
    written.push_back(config_path);
  }

  if (!bundle.sweeps.empty()) {
    std::ostringstream cells;
    cells << "family,epsilon,n,lambda,metric_mean,metric_sd,best\n";
    std::ostringstream best;
    best << "family,epsilon,n,best_lambda\n";
    for (const SweepReport& report : bundle.sweeps) {
      for (const SweepCell& c : report.cells) {
        cells << report.family_index << ',' << format_double(c.epsilon) << ',' << c.n << ','
              << format_double(c.lambda) << ',' << format_double(c.metric_mean) << ','
              << format_double(c.metric_sd) << ',' << (c.best ? 1 : 0) << "\n";
      }
      for (const SweepBest& b : report.best) {
        best << report.family_index << ',' << format_double(b.epsilon) << ',' << b.n << ','
             << format_double(b.lambda) << "\n";
      }
    }
    const auto cells_path = out_dir / "sweep_cells.csv";
    write_text_file(cells_path, cells.str());
    written.push_back(cells_path);
    const auto best_path = out_dir / "sweep_best.csv";
    write_text_file(best_path, best.str());
    written.push_back(best_path);
  }

  if (bundle.trends) {
    ordered_json j;
    j["families"] = static_cast<int>(bundle.trends->families.size());
    j["epsilon_trend_fraction"] = bundle.trends->epsilon_fraction;
    j["size_trend_fraction"] = bundle.trends->size_fraction;
    ordered_json families = ordered_json::array();
    for (const FamilyTrend& t : bundle.trends->families) {
      ordered_json entry;
      entry["family"] = t.family_index;
      entry["best_by_epsilon_desc"] = t.best_by_epsilon;
      entry["best_by_size_asc"] = t.best_by_size;
      entry["epsilon_monotone"] = t.epsilon_monotone;
      entry["size_monotone"] = t.size_monotone;
      families.push_back(std::move(entry));
    }
    j["per_family"] = std::move(families);
    const auto path = out_dir / "trends.json";
    write_text_file(path, j.dump(2) + "\n");
    written.push_back(path);

    // One flat CSV per sweep axis, rows ordered as the trend chains read them.
    std::ostringstream by_eps;
    by_eps << "family,epsilon,best_lambda\n";
    std::ostringstream by_size;
    by_size << "family,n,best_lambda\n";
    for (const FamilyTrend& t : bundle.trends->families) {
      for (std::size_t i = 0; i < bundle.trends->epsilon_axis.size(); ++i) {
        by_eps << t.family_index << ',' << format_double(bundle.trends->epsilon_axis[i]) << ','
               << format_double(t.best_by_epsilon.at(i)) << "\n";
      }
      for (std::size_t i = 0; i < bundle.trends->size_axis.size(); ++i) {
        by_size << t.family_index << ',' << bundle.trends->size_axis[i] << ','
                << format_double(t.best_by_size.at(i)) << "\n";
      }
    }
    const auto by_eps_path = out_dir / "trend_by_epsilon.csv";
    write_text_file(by_eps_path, by_eps.str());
    written.push_back(by_eps_path);
    const auto by_size_path = out_dir / "trend_by_size.csv";
    write_text_file(by_size_path, by_size.str());
    written.push_back(by_size_path);
  }
  return written;
}

std::filesystem::path default_out_root() {
  if (const char* env = std::getenv("MIXBELL_OUT_DIR")) {
    if (env[0] != '\0') return std::filesystem::path(env);
  }
  return std::filesystem::path("runs");
}

}  // namespace mixbell
