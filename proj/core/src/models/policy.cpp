#include "cgdt/models/policy.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>

#include "cgdt/diff/ops.hpp"
#include "cgdt/models/checkpoint.hpp"

namespace cgdt::models {

using diff::Tensor;
using nlohmann::json;

namespace {

// Token i reads token j iff j <= i and both belong to real (unpadded) steps.
AttentionMask causal_mask(const std::vector<std::uint8_t>& step_mask, std::size_t batch, std::size_t steps,
                          std::size_t tokens_per_step) {
  const std::size_t l = steps * tokens_per_step;
  AttentionMask allowed(batch * l * l, 0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < l; ++i) {
      if (!step_mask[b * steps + i / tokens_per_step]) continue;
      for (std::size_t j = 0; j <= i; ++j) {
        allowed[(b * l + i) * l + j] = step_mask[b * steps + j / tokens_per_step];
      }
    }
  }
  return allowed;
}

}  // namespace

DecisionTransformer::DecisionTransformer(TransformerConfig config, std::size_t state_dim, data::ActionSpace space,
                                         std::uint64_t seed)
    : config_(config), state_dim_(state_dim), space_(space) {
  config_.validate();
  if (state_dim_ == 0) throw std::invalid_argument("state_dim must be >= 1");
  Rng init = make_rng(seed, 0x9011c7);
  const std::size_t d = config_.embed_dim;
  embed_return_ = Linear(params_, "policy.embed_return", 1, d, init);
  embed_state_ = Linear(params_, "policy.embed_state", state_dim_, d, init);
  embed_action_ = Linear(params_, "policy.embed_action", space_.encoded_dim(), d, init);
  if (config_.positional_encoding) {
    std::normal_distribution<double> dist(0.0, 0.02);
    std::vector<double> v(config_.max_timestep * d);
    for (auto& x : v) x = dist(init);
    embed_timestep_ = params_.add("policy.embed_timestep", Tensor::from({config_.max_timestep, d}, std::move(v)));
  }
  embed_ln_ = LayerNorm(params_, "policy.embed_ln", d);
  backbone_ = TransformerBackbone(config_, params_, "policy.transformer", init);
  head_ = Linear(params_, "policy.head", d, space_.discrete ? space_.n : space_.dim, init);
}

PolicyOutput DecisionTransformer::forward(const SequenceInput& input) const {
  Rng unused(0);
  return forward(input, false, unused);
}

PolicyOutput DecisionTransformer::forward(const SequenceInput& in, bool training, Rng& rng) const {
  const std::size_t b = in.batch;
  const std::size_t k = in.context_length;
  if (k > config_.context_length) {
    throw std::invalid_argument("window of " + std::to_string(k) + " steps exceeds context length " +
                                std::to_string(config_.context_length));
  }
  if (in.states.shape() != diff::Shape{b, k, state_dim_} ||
      in.actions.shape() != diff::Shape{b, k, space_.encoded_dim()} || in.rtg.shape() != diff::Shape{b, k, 1} ||
      in.mask.size() != b * k || in.timesteps.size() != b * k) {
    throw diff::ShapeError("policy input shapes do not match the model: states " + diff::to_string(in.states.shape()) +
                           ", actions " + diff::to_string(in.actions.shape()) + ", rtg " +
                           diff::to_string(in.rtg.shape()));
  }
  const std::size_t d = config_.embed_dim;
  Tensor r = embed_return_(in.rtg);
  Tensor s = embed_state_(in.states);
  Tensor a = embed_action_(in.actions);
  if (config_.positional_encoding) {
    std::vector<std::size_t> ts(in.timesteps);
    for (auto& t : ts) t = std::min(t, config_.max_timestep - 1);
    Tensor time = diff::reshape(diff::embedding(embed_timestep_, ts), {b, k, d});
    r = r + time;
    s = s + time;
    a = a + time;
  }
  Tensor tokens = embed_ln_(interleave_tokens({r, s, a}, b, k));
  tokens = diff::dropout(tokens, config_.dropout, training, rng);
  Tensor hidden = backbone_.forward(tokens, causal_mask(in.mask, b, k, 3), training, rng);
  std::vector<std::size_t> state_rows;
  state_rows.reserve(b * k);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t t = 0; t < k; ++t) state_rows.push_back(i * 3 * k + 3 * t + 1);
  }
  Tensor out = head_(diff::gather_rows(hidden, state_rows));  // [B*K, out]
  PolicyOutput result;
  result.discrete = space_.discrete;
  if (space_.discrete) {
    result.logits = diff::reshape(out, {b, k, space_.n});
  } else {
    const double mid = 0.5 * (space_.high + space_.low);
    const double half = 0.5 * (space_.high - space_.low);
    result.action = diff::reshape(diff::add_scalar(diff::mul_scalar(diff::tanh(out), half), mid), {b, k, space_.dim});
  }
  return result;
}

json DecisionTransformer::to_json() const {
  return json{{"format", kCheckpointFormat},
              {"model", "policy"},
              {"config", config_},
              {"state_dim", state_dim_},
              {"action_space", action_space_to_json(space_)},
              {"return_scale", return_scale_},
              {"parameters", parameters_to_json(params_)}};
}

DecisionTransformer DecisionTransformer::from_json(const json& j) {
  if (checkpoint_kind(j) != "policy") throw std::invalid_argument("checkpoint is not a policy");
  DecisionTransformer model(j.at("config").get<TransformerConfig>(), j.at("state_dim").get<std::size_t>(),
                            action_space_from_json(j.at("action_space")), 0);
  model.return_scale_ = j.at("return_scale").get<double>();
  parameters_from_json(j.at("parameters"), model.params_);
  return model;
}

}  // namespace cgdt::models
