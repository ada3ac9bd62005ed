#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "cgdt/data/trajectory.hpp"
#include "cgdt/diff/optimizer.hpp"
#include "cgdt/models/transformer.hpp"

namespace cgdt::train {

class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string key, const std::string& what);
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

/// Every knob of a training run. JSON keys match the field names; unknown keys
/// are rejected.
struct TrainConfig {
  double tau_c = 0.5;
  double tau_p = 0.5;
  double alpha = 1.0;
  std::int64_t critic_iterations = 5000;  // M
  std::int64_t policy_iterations = 5000;  // N
  std::size_t batch_size = 256;
  std::size_t context_length = 1;  // K
  double learning_rate = 1e-3;
  std::int64_t warmup_steps = 500;
  double grad_clip = 0.25;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;
  std::int64_t early_stop_patience = 10;
  std::int64_t eval_interval = 250;
  double critic_data_fraction = 1.0;
  double validation_fraction = 0.1;
  bool critic_indicator_flip = false;
  double sigma_floor = 1e-3;
  /// "desk" (2 layers / 2 heads / 64 dims) or "paper".
  std::string architecture = "desk";
  models::TransformerConfig policy_model = models::TransformerConfig::desk();
  models::TransformerConfig critic_model = models::TransformerConfig::desk();
  /// Inferred from the dataset when absent.
  std::optional<data::ActionSpace> action_space;

  /// Throws ConfigError naming the first offending key.
  void validate() const;
  diff::OptimizerConfig optimizer() const;
  /// Model configs with the context length forced to K.
  models::TransformerConfig resolved_policy_model() const;
  models::TransformerConfig resolved_critic_model() const;
};

/// Fully resolved echo, including defaults.
nlohmann::json to_json(const TrainConfig& config);
/// Starts from defaults (or the requested architecture preset) and applies
/// the keys present in `j`. Unknown keys and out-of-range values throw
/// ConfigError.
TrainConfig config_from_json(const nlohmann::json& j);

/// Discrete: n = largest index + 1. Continuous: box of the observed
/// dimension with bounds [-1, 1] (widened if the data exceeds them).
data::ActionSpace infer_action_space(const data::Dataset& dataset);

}  // namespace cgdt::train
