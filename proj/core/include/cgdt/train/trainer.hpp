#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cgdt/data/trajectory.hpp"
#include "cgdt/models/critic.hpp"
#include "cgdt/models/policy.hpp"
#include "cgdt/train/config.hpp"

namespace cgdt::train {

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::string phase, std::int64_t step, std::string what);
  const std::string& phase() const { return phase_; }
  std::int64_t step() const { return step_; }

 private:
  std::string phase_;
  std::int64_t step_;
};

struct ValidationPoint {
  std::int64_t step = 0;
  double nll = 0.0;
};

/// Per-step training history of one run.
struct RunRecord {
  std::string kind;  // "critic", "policy" or "dt"
  std::vector<double> critic_loss;
  std::vector<double> bc_loss;
  std::vector<double> guidance_loss;  // NaN on steps where the guidance weight is 0
  std::vector<double> total_loss;
  std::vector<double> guidance_weight;  // alpha * j / N
  std::vector<ValidationPoint> validation;
  std::optional<std::int64_t> early_stop_step;
  std::int64_t best_step = 0;
  std::int64_t steps_run = 0;
  std::size_t parameter_count = 0;
  double return_scale = 1.0;
  nlohmann::json config;
};

nlohmann::json to_json(const RunRecord& record);

struct CriticRun {
  models::GaussianCritic critic;
  RunRecord record;
};

struct PolicyRun {
  models::DecisionTransformer policy;
  RunRecord record;
};

/// Asymmetric critic training: 90/10 split (validation_fraction), optional
/// top-return filtering of the training split, minibatch descent on the
/// asymmetric NLL, and early stopping on the plain NLL of the validation
/// split. The returned critic holds the best validation checkpoint.
CriticRun train_critic(const data::Dataset& dataset, const TrainConfig& config);

/// Critic-guided policy training with guidance weight alpha * j / N at step j.
/// The critic is frozen; its parameters are never written.
PolicyRun train_policy(const data::Dataset& dataset, const models::GaussianCritic& critic, const TrainConfig& config);

/// Return-conditioned behavior cloning only. Shares the code path (and the
/// RNG streams) of train_policy with alpha = 0.
PolicyRun train_dt_baseline(const data::Dataset& dataset, const TrainConfig& config);

/// Plain Gaussian NLL of the critic over every step of `dataset`, in
/// normalized return units. At most `max_windows` windows are scored; larger
/// datasets use a fixed seeded subset.
double validation_nll(const models::GaussianCritic& critic, const data::Dataset& dataset, std::size_t max_windows,
                      std::uint64_t seed);

}  // namespace cgdt::train
