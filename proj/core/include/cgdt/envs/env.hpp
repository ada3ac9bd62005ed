#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cgdt/common/random.hpp"
#include "cgdt/data/trajectory.hpp"

namespace cgdt::envs {

enum class EnvKind { BernoulliBandit, ContinuousBandit, StitchChain };

std::string to_string(EnvKind kind);
/// Accepts "bernoulli_bandit" (alias "bernoulli"), "continuous_bandit",
/// "stitch_chain".
EnvKind parse_env_kind(const std::string& name);

struct EnvSpec {
  EnvKind kind = EnvKind::BernoulliBandit;
  // Bernoulli bandit: arm 0 (a1) pays 1 with probability 1 - p, arm 1 (a2)
  // with probability p.
  double p = 0.1;
  // Stitch chain: `chain_length` states, the last one is the fork.
  std::size_t chain_length = 5;
  double lucky_probability = 0.1;  // fork action A pays lucky_reward with this probability
  double lucky_reward = 1.0;
  double safe_reward = 0.4;  // fork action B, deterministic

  static EnvSpec bernoulli_bandit(double p);
  static EnvSpec continuous_bandit();
  static EnvSpec stitch_chain();

  std::size_t horizon() const;
  std::size_t state_dim() const;
  data::ActionSpace action_space() const;
  /// Throws std::invalid_argument when a parameter is out of range.
  void validate() const;

  bool operator==(const EnvSpec&) const = default;
};

struct EnvState {
  std::size_t t = 0;
  std::vector<double> observation;
  bool done = false;
};

struct StepResult {
  EnvState next;
  double reward = 0.0;
  bool done = false;
};

EnvState reset(const EnvSpec& spec);
/// Throws std::invalid_argument for an action outside the action space or a
/// finished episode.
StepResult step(const EnvSpec& spec, const EnvState& state, const data::Action& action, Rng& rng);

/// Noise-free expected reward of a continuous-bandit action.
double continuous_expected_reward(double action);

struct BehaviorSpec {
  // Bernoulli bandit: probability of pulling a1. Defaults to the env's p.
  std::optional<double> first_arm_probability;
  // Stitch chain: probability of fork action A.
  double fork_a_probability = 0.5;
};

/// `n_samples` episodes from the scripted behavior policy:
/// bandit pulls a1 with probability p, continuous bandit draws a ~ U[-1, 1],
/// stitch chain passes through with action 0 and picks fork actions at
/// random.
data::Dataset generate_dataset(const EnvSpec& spec, const BehaviorSpec& behavior, std::size_t n_samples,
                               std::uint64_t seed);

struct OracleReport {
  /// Discrete: expected return of each first action (fork action for the
  /// chain). Continuous: expected return at a = -1, 0, 1.
  std::vector<double> action_values;
  double bayes_optimal_value = 0.0;
  data::Action bayes_optimal_action = data::Action::discrete(0);
  /// Bandit only: value of a policy following the dataset posterior
  /// pi_beta(a | R = 1).
  std::optional<double> rcsl_posterior_value;
  /// Stitch chain only: expected value of the action behind the highest
  /// return seen in data (the lucky branch).
  std::optional<double> max_return_action_value;
  /// Range of expected returns reachable by some policy.
  double min_achievable = 0.0;
  double max_achievable = 0.0;
};

OracleReport oracle(const EnvSpec& spec);

}  // namespace cgdt::envs
