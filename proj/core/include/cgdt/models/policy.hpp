#pragma once

#include <cstdint>

#include <nlohmann/json_fwd.hpp>

#include "cgdt/data/trajectory.hpp"
#include "cgdt/models/transformer.hpp"

namespace cgdt::models {

struct PolicyOutput {
  bool discrete = true;
  diff::Tensor logits;  // [B, K, n_actions] when discrete
  diff::Tensor action;  // [B, K, action_dim] when continuous, inside the action box
};

/// Return-conditioned causal transformer. Each timestep contributes three
/// tokens (R_t, s_t, a_t); the action for step t is read from the s_t token,
/// so it sees R_{<=t}, s_{<=t} and a_{<t} only.
class DecisionTransformer {
 public:
  DecisionTransformer(TransformerConfig config, std::size_t state_dim, data::ActionSpace space, std::uint64_t seed);
  // Copies would alias parameter storage.
  DecisionTransformer(const DecisionTransformer&) = delete;
  DecisionTransformer& operator=(const DecisionTransformer&) = delete;
  DecisionTransformer(DecisionTransformer&&) = default;
  DecisionTransformer& operator=(DecisionTransformer&&) = default;

  /// Throws std::invalid_argument when the window is longer than K or the
  /// input dimensions do not match the model.
  PolicyOutput forward(const SequenceInput& input, bool training, Rng& dropout_rng) const;
  /// Inference: no dropout, nothing drawn from any RNG.
  PolicyOutput forward(const SequenceInput& input) const;

  diff::ParameterSet& parameters() { return params_; }
  const diff::ParameterSet& parameters() const { return params_; }
  const TransformerConfig& config() const { return config_; }
  std::size_t state_dim() const { return state_dim_; }
  const data::ActionSpace& action_space() const { return space_; }

  /// Divisor applied to returns-to-go before they reach the model.
  double return_scale() const { return return_scale_; }
  void set_return_scale(double scale) { return_scale_ = scale; }

  nlohmann::json to_json() const;
  static DecisionTransformer from_json(const nlohmann::json& j);

 private:
  TransformerConfig config_;
  std::size_t state_dim_;
  data::ActionSpace space_;
  double return_scale_ = 1.0;
  diff::ParameterSet params_;
  Linear embed_return_;
  Linear embed_state_;
  Linear embed_action_;
  diff::Tensor embed_timestep_;
  LayerNorm embed_ln_;
  TransformerBackbone backbone_;
  Linear head_;
};

}  // namespace cgdt::models
