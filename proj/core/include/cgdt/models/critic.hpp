#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cgdt/data/trajectory.hpp"
#include "cgdt/models/transformer.hpp"

namespace cgdt::models {

/// Per-position Gaussian over the return-to-go.
struct ReturnDistribution {
  diff::Tensor mean;    // [B, K]
  diff::Tensor stddev;  // [B, K], >= sigma floor
};

inline constexpr double kDefaultSigmaFloor = 1e-3;

/// Causal transformer over (s_t, a_t) token pairs predicting a Gaussian
/// return distribution at each a_t token. Unlike the policy, the action at
/// step t is visible to the prediction at step t.
class GaussianCritic {
 public:
  GaussianCritic(TransformerConfig config, std::size_t state_dim, data::ActionSpace space, std::uint64_t seed,
                 double sigma_floor = kDefaultSigmaFloor);
  GaussianCritic(const GaussianCritic&) = delete;
  GaussianCritic& operator=(const GaussianCritic&) = delete;
  GaussianCritic(GaussianCritic&&) = default;
  GaussianCritic& operator=(GaussianCritic&&) = default;

  /// Predictions at the dataset actions in `input.actions`.
  ReturnDistribution forward(const SequenceInput& input, bool training, Rng& dropout_rng) const;
  ReturnDistribution forward(const SequenceInput& input) const;

  /// Predictions for substitute actions: for each candidate tensor c
  /// ([B, K, action_dim]) and each step t, the return distribution given the
  /// dataset history (s_{<=t}, a_{<t}) and action c_t. All candidates share
  /// one pass; each candidate token reads the real history and itself only.
  /// Inference mode (no dropout).
  std::vector<ReturnDistribution> evaluate_candidates(const SequenceInput& input,
                                                      const std::vector<diff::Tensor>& candidates) const;

  diff::ParameterSet& parameters() { return params_; }
  const diff::ParameterSet& parameters() const { return params_; }
  const TransformerConfig& config() const { return config_; }
  std::size_t state_dim() const { return state_dim_; }
  const data::ActionSpace& action_space() const { return space_; }
  double sigma_floor() const { return sigma_floor_; }

  /// Returns are modelled in units of R / return_scale.
  double return_scale() const { return return_scale_; }
  void set_return_scale(double scale) { return_scale_ = scale; }

  nlohmann::json to_json() const;
  static GaussianCritic from_json(const nlohmann::json& j);

 private:
  struct Outputs {
    ReturnDistribution dataset;
    std::vector<ReturnDistribution> candidates;
  };
  Outputs run(const SequenceInput& input, const std::vector<diff::Tensor>& candidates, bool training,
              Rng& rng) const;
  ReturnDistribution head(const diff::Tensor& hidden, std::size_t batch, std::size_t steps) const;

  TransformerConfig config_;
  std::size_t state_dim_;
  data::ActionSpace space_;
  double sigma_floor_;
  double return_scale_ = 1.0;
  diff::ParameterSet params_;
  Linear embed_state_;
  Linear embed_action_;
  diff::Tensor embed_timestep_;
  LayerNorm embed_ln_;
  TransformerBackbone backbone_;
  Linear head_;
};

/// 0.5 * log(2 pi sigma^2) + (R - mu)^2 / (2 sigma^2), elementwise.
diff::Tensor gaussian_nll(const diff::Tensor& mean, const diff::Tensor& stddev, const diff::Tensor& target);
/// Scalar form; throws std::invalid_argument for sigma <= 0.
double gaussian_nll(double mean, double stddev, double target);

}  // namespace cgdt::models
