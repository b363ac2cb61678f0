#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mixbell {

/// Dense |S| x |A| action-value table, row-major over states.
struct QTable {
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> values;

  QTable() = default;
  QTable(int states, int actions, double fill = 0.0)
      : num_states(states),
        num_actions(actions),
        values(static_cast<std::size_t>(states) * actions, fill) {}

  double& at(int s, int a) { return values[static_cast<std::size_t>(s) * num_actions + a]; }
  double at(int s, int a) const { return values[static_cast<std::size_t>(s) * num_actions + a]; }
  int size() const { return num_states * num_actions; }
};

/// Largest absolute entry.
double sup_norm(const QTable& q);

/// Largest absolute entrywise difference. Tables must share a shape.
double sup_norm_diff(const QTable& a, const QTable& b);

/// Stochastic policy, probs[s*A + a] = pi(a | s). Rows sum to one.
struct Policy {
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> probs;

  Policy() = default;
  Policy(int states, int actions, double fill = 0.0)
      : num_states(states),
        num_actions(actions),
        probs(static_cast<std::size_t>(states) * actions, fill) {}

  static Policy uniform(int states, int actions);
  /// Deterministic policy putting all mass on `action[s]`.
  static Policy deterministic(int states, int actions, const std::vector<int>& action);

  double& at(int s, int a) { return probs[static_cast<std::size_t>(s) * num_actions + a]; }
  double at(int s, int a) const { return probs[static_cast<std::size_t>(s) * num_actions + a]; }
};

/// Backup flavor: greedy maximization over next actions, or expectation
/// under a fixed evaluation policy.
class OperatorMode {
 public:
  static OperatorMode optimality() { return OperatorMode{}; }
  static OperatorMode policy_evaluation(Policy pi) {
    OperatorMode m;
    m.policy_ = std::move(pi);
    return m;
  }

  bool is_optimality() const { return !policy_.has_value(); }
  const Policy& policy() const { return *policy_; }

 private:
  std::optional<Policy> policy_;
};

/// Finite MDP with dense transition tensor, deterministic rewards and a
/// fixed start distribution. Discount lives in [0, 1); rewards are strictly
/// inside (-reward_bound, reward_bound).
struct TabularMdp {
  int num_states = 0;
  int num_actions = 0;
  double discount = 0.0;
  double reward_bound = 1.0;
  std::vector<double> transition;    // [(s*A + a)*S + s']
  std::vector<double> reward;        // [s*A + a]
  std::vector<double> initial_dist;  // [s]

  TabularMdp() = default;
  TabularMdp(int states, int actions, double gamma, double bound)
      : num_states(states),
        num_actions(actions),
        discount(gamma),
        reward_bound(bound),
        transition(static_cast<std::size_t>(states) * actions * states, 0.0),
        reward(static_cast<std::size_t>(states) * actions, 0.0),
        initial_dist(states, 0.0) {}

  double& transition_at(int s, int a, int sp) {
    return transition[(static_cast<std::size_t>(s) * num_actions + a) * num_states + sp];
  }
  double transition_at(int s, int a, int sp) const {
    return transition[(static_cast<std::size_t>(s) * num_actions + a) * num_states + sp];
  }
  double& reward_at(int s, int a) { return reward[static_cast<std::size_t>(s) * num_actions + a]; }
  double reward_at(int s, int a) const {
    return reward[static_cast<std::size_t>(s) * num_actions + a];
  }
};

struct ValidationReport {
  bool ok = true;
  std::vector<std::string> violations;
};

/// Checks shapes, row stochasticity (1e-12), start distribution mass,
/// strict reward bound and discount range. Collects every violation rather
/// than stopping at the first.
ValidationReport validate_mdp(const TabularMdp& mdp);

/// Value of landing in `next_state`: max over actions, or the policy mix.
double next_state_value(const QTable& q, int next_state, const OperatorMode& mode);

/// One exact dynamic-programming backup of the whole table:
/// out(s,a) = r(s,a) + gamma * sum_s' P(s'|s,a) * value(s').
QTable exact_backup(const TabularMdp& mdp, const QTable& q, const OperatorMode& mode);

/// Single-sample backup through one observed successor.
double stochastic_backup(const QTable& q, double reward, int next_state, double discount,
                         const OperatorMode& mode);

/// Fixed point of the exact backup, iterated until the sup-norm residual
/// falls below `tol`.
QTable optimal_q(const TabularMdp& mdp, double tol = 1e-10, int max_iters = 1000000);

/// Deterministic argmax policy; ties go to the lowest action index.
Policy greedy_policy(const QTable& q);

/// Expected discounted return of `pi` from the start distribution, solved
/// iteratively to within `tol`.
double policy_value(const TabularMdp& mdp, const Policy& pi, double tol = 1e-10);

}  // namespace mixbell
