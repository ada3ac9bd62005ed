#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cgdt/data/trajectory.hpp"
#include "cgdt/eval/report.hpp"
#include "cgdt/eval/rollout.hpp"
#include "cgdt/models/policy.hpp"
#include "cgdt/train/config.hpp"

namespace cgdt::eval {

/// Mean return of `policy` over n_episodes for every seed in `seeds`.
EvalReport evaluate(const models::DecisionTransformer& policy, const envs::EnvSpec& env, double target_return,
                    std::size_t n_episodes, const std::vector<std::uint64_t>& seeds,
                    const std::string& policy_id = "");

/// Rollouts at targets lambda * base_target. The consistency score is the
/// mean over lambda of |achieved - min(lambda * R, oracle max)|.
EvalReport conditional_sweep(const models::DecisionTransformer& policy, const envs::EnvSpec& env,
                             double base_target, const std::vector<double>& lambdas, std::size_t n_episodes,
                             const std::vector<std::uint64_t>& seeds, const std::string& policy_id = "");

/// Mean over rows of |achieved mean - clamped target|.
double consistency_score(const std::vector<LambdaRow>& rows);

enum class AblationParameter { TauC, TauP, Alpha };
std::string to_string(AblationParameter parameter);
AblationParameter parse_ablation_parameter(const std::string& name);
/// Copy of `base` with the parameter set to `value`.
train::TrainConfig with_parameter(const train::TrainConfig& base, AblationParameter parameter, double value);

struct EvalSettings {
  double target_return = 1.0;
  std::size_t n_episodes = 1000;
  std::vector<std::uint64_t> eval_seeds{0};
};

/// Trains and evaluates one configuration; returns the raw episode returns.
/// `baseline` selects the return-conditioned baseline (no critic).
using CellRunner = std::function<std::vector<double>(const train::TrainConfig& config, bool baseline)>;

/// In-process runner: critic + guided policy (or baseline) on `dataset`, then
/// rollouts for every eval seed.
CellRunner local_cell_runner(const data::Dataset& dataset, const envs::EnvSpec& env, const EvalSettings& settings);

/// One train + eval per (value, training seed) and one baseline per training
/// seed with alpha = 0. Deltas are cell mean minus baseline mean.
EvalReport ablation_grid(const envs::EnvSpec& env, const train::TrainConfig& base, AblationParameter parameter,
                         const std::vector<double>& values, const std::vector<std::uint64_t>& train_seeds,
                         const EvalSettings& settings, const CellRunner& runner);

}  // namespace cgdt::eval
