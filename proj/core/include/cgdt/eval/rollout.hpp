#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cgdt/common/random.hpp"
#include "cgdt/data/trajectory.hpp"
#include "cgdt/envs/env.hpp"
#include "cgdt/models/policy.hpp"

namespace cgdt::eval {

/// What an acting policy sees at step t: everything up to s_t.
struct EpisodeHistory {
  std::vector<std::vector<double>> states;  // s_0 .. s_t
  std::vector<data::Action> actions;        // a_0 .. a_{t-1}
  std::vector<double> rewards;              // r_0 .. r_{t-1}
  std::vector<double> returns_to_go;        // R~_0 .. R~_t, raw units
};

struct Episode {
  EpisodeHistory history;  // complete, with the final action and reward
  double total_return = 0.0;
};

struct RolloutResult {
  std::vector<double> returns;
  std::vector<Episode> episodes;  // filled when keep_traces is set
  /// Steps at which the conditioning return-to-go was negative.
  std::size_t negative_rtg_steps = 0;
};

struct RolloutOptions {
  bool keep_traces = false;
  /// Episodes fed through the model together.
  std::size_t chunk_size = 1024;
};

/// Hand-written policy: picks an action from the history using `rng`.
using ScriptedPolicy = std::function<data::Action(const EpisodeHistory&, Rng&)>;

/// Runs `n_episodes` episodes conditioned on `target_return` (raw units). The
/// policy receives R~_t / return_scale for R~_0 = target and
/// R~_{t+1} = R~_t - r_t over the last K steps. Discrete actions are sampled,
/// continuous actions are the model output. Episode i draws from its own
/// stream derive_seed(seed, i), so results do not depend on chunking.
RolloutResult rollout(const models::DecisionTransformer& policy, const envs::EnvSpec& env, double target_return,
                      std::size_t n_episodes, std::uint64_t seed, const RolloutOptions& options = {});

RolloutResult rollout(const ScriptedPolicy& policy, const envs::EnvSpec& env, double target_return,
                      std::size_t n_episodes, std::uint64_t seed, const RolloutOptions& options = {});

/// Mean action probabilities of the policy at the initial state conditioned on
/// `target_return`. Discrete policies only.
std::vector<double> initial_action_probabilities(const models::DecisionTransformer& policy, const envs::EnvSpec& env,
                                                 double target_return);

}  // namespace cgdt::eval
