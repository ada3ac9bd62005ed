#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cgdt/common/random.hpp"
#include "cgdt/data/sampling.hpp"
#include "cgdt/diff/tensor.hpp"

namespace cgdt::models {

struct TransformerConfig {
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  std::size_t embed_dim = 64;
  std::size_t context_length = 1;  // K, in timesteps
  double dropout = 0.1;
  bool positional_encoding = true;
  std::size_t max_timestep = 64;  // size of the timestep embedding table

  /// Desk-scale default: 2 layers, 2 heads, 64 dims.
  static TransformerConfig desk();
  /// Policy architecture from the reference hyperparameters: 3 layers, 4 heads, 128 dims.
  static TransformerConfig paper_policy();
  /// Critic architecture from the reference hyperparameters: 2 layers, 4 heads, 128 dims.
  static TransformerConfig paper_critic();

  void validate() const;
  bool operator==(const TransformerConfig&) const = default;
};

void to_json(nlohmann::json& j, const TransformerConfig& c);
/// Strict: unknown keys and invalid values throw std::invalid_argument.
void from_json(const nlohmann::json& j, TransformerConfig& c);

/// y = x W + b, with W: [in, out].
struct Linear {
  diff::Tensor weight;
  diff::Tensor bias;

  Linear() = default;
  Linear(diff::ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& init);
  diff::Tensor operator()(const diff::Tensor& x) const;
};

struct LayerNorm {
  diff::Tensor gamma;
  diff::Tensor beta;

  LayerNorm() = default;
  LayerNorm(diff::ParameterSet& params, const std::string& name, std::size_t dim);
  diff::Tensor operator()(const diff::Tensor& x) const;
};

/// Attention flags for a [B, L, L] mask, query-major: allowed[b][i][j] says
/// whether token i may read token j.
using AttentionMask = std::vector<std::uint8_t>;

/// Pre-LayerNorm GPT-style stack with ReLU MLPs and a final LayerNorm.
class TransformerBackbone {
 public:
  TransformerBackbone() = default;
  TransformerBackbone(const TransformerConfig& config, diff::ParameterSet& params, const std::string& prefix,
                      Rng& init);

  /// x: [B, L, D]. `rng` is only drawn from when training with dropout > 0.
  diff::Tensor forward(const diff::Tensor& x, const AttentionMask& mask, bool training, Rng& rng) const;

 private:
  struct Block {
    LayerNorm ln1;
    Linear qkv;
    Linear proj;
    LayerNorm ln2;
    Linear fc1;
    Linear fc2;
  };

  diff::Tensor attention(const Block& block, const diff::Tensor& x, const AttentionMask& mask, bool training,
                         Rng& rng) const;

  TransformerConfig config_;
  std::vector<Block> blocks_;
  LayerNorm final_ln_;
};

/// Model-facing view of a collated batch.
struct SequenceInput {
  std::size_t batch = 0;
  std::size_t context_length = 0;
  diff::Tensor states;   // [B, K, state_dim]
  diff::Tensor actions;  // [B, K, action_dim]
  diff::Tensor rtg;      // [B, K, 1]
  std::vector<std::size_t> timesteps;
  std::vector<std::uint8_t> mask;

  static SequenceInput from_batch(const data::Batch& batch);
};

/// Rows of a [B*M*K, D] tensor built from M per-modality [B, K, D] tensors,
/// interleaved per timestep: (m0_t0, m1_t0, ..., m0_t1, ...).
diff::Tensor interleave_tokens(const std::vector<diff::Tensor>& modalities, std::size_t batch, std::size_t steps);

}  // namespace cgdt::models
