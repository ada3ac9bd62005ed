#include "cgdt/envs/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cgdt::envs {

std::string to_string(EnvKind kind) {
  switch (kind) {
    case EnvKind::BernoulliBandit:
      return "bernoulli_bandit";
    case EnvKind::ContinuousBandit:
      return "continuous_bandit";
    case EnvKind::StitchChain:
      return "stitch_chain";
  }
  return "unknown";
}

EnvKind parse_env_kind(const std::string& name) {
  if (name == "bernoulli_bandit" || name == "bernoulli") return EnvKind::BernoulliBandit;
  if (name == "continuous_bandit" || name == "continuous") return EnvKind::ContinuousBandit;
  if (name == "stitch_chain" || name == "stitch") return EnvKind::StitchChain;
  throw std::invalid_argument("unknown environment '" + name + "'");
}

EnvSpec EnvSpec::bernoulli_bandit(double p) {
  EnvSpec s;
  s.kind = EnvKind::BernoulliBandit;
  s.p = p;
  s.validate();
  return s;
}

EnvSpec EnvSpec::continuous_bandit() {
  EnvSpec s;
  s.kind = EnvKind::ContinuousBandit;
  return s;
}

EnvSpec EnvSpec::stitch_chain() {
  EnvSpec s;
  s.kind = EnvKind::StitchChain;
  return s;
}

std::size_t EnvSpec::horizon() const { return kind == EnvKind::StitchChain ? chain_length : 1; }

std::size_t EnvSpec::state_dim() const { return kind == EnvKind::StitchChain ? chain_length : 1; }

data::ActionSpace EnvSpec::action_space() const {
  if (kind == EnvKind::ContinuousBandit) return data::ActionSpace::box(1, -1.0, 1.0);
  return data::ActionSpace::discrete_space(2);
}

void EnvSpec::validate() const {
  if (kind == EnvKind::BernoulliBandit && !(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("bandit probability p must be in (0, 1), got " + std::to_string(p));
  }
  if (kind == EnvKind::StitchChain) {
    if (chain_length < 1) throw std::invalid_argument("stitch chain needs at least one state");
    if (!(lucky_probability >= 0.0 && lucky_probability <= 1.0)) {
      throw std::invalid_argument("stitch chain lucky probability must be in [0, 1]");
    }
  }
}

namespace {

std::vector<double> one_hot(std::size_t n, std::size_t i) {
  std::vector<double> v(n, 0.0);
  v[i] = 1.0;
  return v;
}

}  // namespace

EnvState reset(const EnvSpec& spec) {
  spec.validate();
  EnvState s;
  s.observation = spec.kind == EnvKind::StitchChain ? one_hot(spec.chain_length, 0) : std::vector<double>{1.0};
  return s;
}

double continuous_expected_reward(double action) { return 1.0 - action * action; }

StepResult step(const EnvSpec& spec, const EnvState& state, const data::Action& action, Rng& rng) {
  if (state.done) throw std::invalid_argument("step called on a finished episode");
  if (!spec.action_space().contains(action)) throw std::invalid_argument("invalid action for " + to_string(spec.kind));
  StepResult r;
  r.next.t = state.t + 1;
  switch (spec.kind) {
    case EnvKind::BernoulliBandit: {
      const double pay = action.index() == 0 ? 1.0 - spec.p : spec.p;
      r.reward = std::bernoulli_distribution(pay)(rng) ? 1.0 : 0.0;
      r.done = true;
      r.next.observation = state.observation;
      break;
    }
    case EnvKind::ContinuousBandit: {
      const double a = action.values()[0];
      const double sd = 0.1 * (1.0 + std::abs(a));
      r.reward = std::normal_distribution<double>(continuous_expected_reward(a), sd)(rng);
      r.done = true;
      r.next.observation = state.observation;
      break;
    }
    case EnvKind::StitchChain: {
      const std::size_t fork = spec.chain_length - 1;
      if (state.t < fork) {
        // Pass-through: every action moves one state along with reward 0.
        r.reward = 0.0;
        r.done = false;
        r.next.observation = one_hot(spec.chain_length, state.t + 1);
      } else {
        if (action.index() == 0) {
          r.reward = std::bernoulli_distribution(spec.lucky_probability)(rng) ? spec.lucky_reward : 0.0;
        } else {
          r.reward = spec.safe_reward;
        }
        r.done = true;
        r.next.observation = state.observation;
      }
      break;
    }
  }
  r.next.done = r.done;
  return r;
}

data::Dataset generate_dataset(const EnvSpec& spec, const BehaviorSpec& behavior, std::size_t n_samples,
                               std::uint64_t seed) {
  spec.validate();
  if (n_samples == 0) throw std::invalid_argument("dataset size must be at least 1");
  const double first_arm = behavior.first_arm_probability.value_or(spec.p);
  if (!(first_arm >= 0.0 && first_arm <= 1.0)) throw std::invalid_argument("behavior probability out of [0, 1]");
  Rng rng = make_rng(seed, 0xda7a);
  data::Dataset out;
  out.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    data::Trajectory traj;
    EnvState s = reset(spec);
    while (!s.done) {
      data::Action a = data::Action::discrete(0);
      switch (spec.kind) {
        case EnvKind::BernoulliBandit:
          a = data::Action::discrete(std::bernoulli_distribution(first_arm)(rng) ? 0 : 1);
          break;
        case EnvKind::ContinuousBandit:
          a = data::Action::continuous({std::uniform_real_distribution<double>(-1.0, 1.0)(rng)});
          break;
        case EnvKind::StitchChain:
          if (s.t + 1 == spec.chain_length) {
            a = data::Action::discrete(std::bernoulli_distribution(behavior.fork_a_probability)(rng) ? 0 : 1);
          }
          break;
      }
      StepResult r = step(spec, s, a, rng);
      traj.states.push_back(s.observation);
      traj.actions.push_back(a);
      traj.rewards.push_back(r.reward);
      s = std::move(r.next);
    }
    out.push_back(std::move(traj));
  }
  return out;
}

OracleReport oracle(const EnvSpec& spec) {
  spec.validate();
  OracleReport r;
  switch (spec.kind) {
    case EnvKind::BernoulliBandit: {
      const double v1 = 1.0 - spec.p;
      const double v2 = spec.p;
      r.action_values = {v1, v2};
      r.bayes_optimal_value = std::max(v1, v2);
      r.bayes_optimal_action = data::Action::discrete(v1 >= v2 ? 0 : 1);
      // Behavior pulls a1 with probability p, so
      // P(a1 | R=1) ∝ p(1-p) and P(a2 | R=1) ∝ (1-p)p.
      const double w1 = spec.p * v1;
      const double w2 = (1.0 - spec.p) * v2;
      r.rcsl_posterior_value = (w1 * v1 + w2 * v2) / (w1 + w2);
      r.min_achievable = std::min(v1, v2);
      r.max_achievable = r.bayes_optimal_value;
      break;
    }
    case EnvKind::ContinuousBandit:
      r.action_values = {continuous_expected_reward(-1.0), continuous_expected_reward(0.0),
                         continuous_expected_reward(1.0)};
      r.bayes_optimal_value = 1.0;
      r.bayes_optimal_action = data::Action::continuous({0.0});
      r.min_achievable = 0.0;
      r.max_achievable = 1.0;
      break;
    case EnvKind::StitchChain: {
      const double va = spec.lucky_probability * spec.lucky_reward;
      const double vb = spec.safe_reward;
      r.action_values = {va, vb};
      r.bayes_optimal_value = std::max(va, vb);
      r.bayes_optimal_action = data::Action::discrete(vb >= va ? 1 : 0);
      r.max_return_action_value = spec.lucky_reward >= spec.safe_reward ? va : vb;
      r.min_achievable = std::min(va, vb);
      r.max_achievable = r.bayes_optimal_value;
      break;
    }
  }
  return r;
}

}  // namespace cgdt::envs
