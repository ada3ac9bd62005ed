#include "cgdt/models/transformer.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "cgdt/diff/ops.hpp"

namespace cgdt::models {

using diff::Tensor;
using nlohmann::json;

TransformerConfig TransformerConfig::desk() { return TransformerConfig{}; }

TransformerConfig TransformerConfig::paper_policy() {
  TransformerConfig c;
  c.n_layers = 3;
  c.n_heads = 4;
  c.embed_dim = 128;
  return c;
}

TransformerConfig TransformerConfig::paper_critic() {
  TransformerConfig c;
  c.n_layers = 2;
  c.n_heads = 4;
  c.embed_dim = 128;
  return c;
}

void TransformerConfig::validate() const {
  if (n_layers == 0) throw std::invalid_argument("n_layers must be >= 1");
  if (n_heads == 0 || embed_dim == 0 || embed_dim % n_heads != 0) {
    throw std::invalid_argument("embed_dim (" + std::to_string(embed_dim) + ") must be divisible by n_heads (" +
                                std::to_string(n_heads) + ")");
  }
  if (context_length == 0) throw std::invalid_argument("context_length must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must be in [0, 1)");
  if (max_timestep == 0) throw std::invalid_argument("max_timestep must be >= 1");
}

void to_json(json& j, const TransformerConfig& c) {
  j = json{{"n_layers", c.n_layers},         {"n_heads", c.n_heads}, {"embed_dim", c.embed_dim},
           {"context_length", c.context_length}, {"dropout", c.dropout}, {"positional_encoding", c.positional_encoding},
           {"max_timestep", c.max_timestep}};
}

void from_json(const json& j, TransformerConfig& c) {
  if (!j.is_object()) throw std::invalid_argument("model config must be an object");
  TransformerConfig out = c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "n_layers") {
        out.n_layers = value.get<std::size_t>();
      } else if (key == "n_heads") {
        out.n_heads = value.get<std::size_t>();
      } else if (key == "embed_dim") {
        out.embed_dim = value.get<std::size_t>();
      } else if (key == "context_length") {
        out.context_length = value.get<std::size_t>();
      } else if (key == "dropout") {
        out.dropout = value.get<double>();
      } else if (key == "positional_encoding") {
        out.positional_encoding = value.get<bool>();
      } else if (key == "max_timestep") {
        out.max_timestep = value.get<std::size_t>();
      } else {
        throw std::invalid_argument("unknown model config key '" + key + "'");
      }
    } catch (const json::exception&) {
      throw std::invalid_argument("model config key '" + key + "' has the wrong type");
    }
  }
  out.validate();
  c = out;
}

namespace {

Tensor init_normal(diff::Shape shape, double sd, Rng& rng) {
  std::normal_distribution<double> dist(0.0, sd);
  std::vector<double> v(diff::numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

}  // namespace

Linear::Linear(diff::ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& init) {
  weight = params.add(name + ".weight", init_normal({in, out}, 0.02, init));
  bias = params.add(name + ".bias", Tensor::zeros({out}));
}

Tensor Linear::operator()(const Tensor& x) const { return diff::matmul(x, weight) + bias; }

LayerNorm::LayerNorm(diff::ParameterSet& params, const std::string& name, std::size_t dim) {
  gamma = params.add(name + ".gamma", Tensor::full({dim}, 1.0));
  beta = params.add(name + ".beta", Tensor::zeros({dim}));
}

Tensor LayerNorm::operator()(const Tensor& x) const { return diff::layer_norm(x, gamma, beta); }

TransformerBackbone::TransformerBackbone(const TransformerConfig& config, diff::ParameterSet& params,
                                         const std::string& prefix, Rng& init)
    : config_(config) {
  config_.validate();
  const std::size_t d = config_.embed_dim;
  for (std::size_t i = 0; i < config_.n_layers; ++i) {
    const std::string p = prefix + ".block" + std::to_string(i);
    Block b;
    b.ln1 = LayerNorm(params, p + ".ln1", d);
    b.qkv = Linear(params, p + ".attn.qkv", d, 3 * d, init);
    b.proj = Linear(params, p + ".attn.proj", d, d, init);
    b.ln2 = LayerNorm(params, p + ".ln2", d);
    b.fc1 = Linear(params, p + ".mlp.fc1", d, 4 * d, init);
    b.fc2 = Linear(params, p + ".mlp.fc2", 4 * d, d, init);
    blocks_.push_back(std::move(b));
  }
  final_ln_ = LayerNorm(params, prefix + ".ln_f", d);
}

Tensor TransformerBackbone::attention(const Block& block, const Tensor& x, const AttentionMask& mask, bool training,
                                      Rng& rng) const {
  const std::size_t b = x.size(0);
  const std::size_t l = x.size(1);
  const std::size_t d = config_.embed_dim;
  const std::size_t h = config_.n_heads;
  const std::size_t dh = d / h;
  Tensor qkv = block.qkv(x);  // [B, L, 3D]
  auto heads = [&](std::size_t part) {
    Tensor t = diff::slice(qkv, 2, part * d, d);
    return diff::permute(diff::reshape(t, {b, l, h, dh}), {0, 2, 1, 3});  // [B, H, L, dh]
  };
  Tensor q = heads(0);
  Tensor k = heads(1);
  Tensor v = heads(2);
  Tensor scores = diff::mul_scalar(diff::matmul(q, diff::transpose_last2(k)), 1.0 / std::sqrt(double(dh)));
  Tensor probs = diff::softmax(diff::apply_attention_mask(scores, mask));
  probs = diff::dropout(probs, config_.dropout, training, rng);
  Tensor ctx = diff::matmul(probs, v);  // [B, H, L, dh]
  ctx = diff::reshape(diff::permute(ctx, {0, 2, 1, 3}), {b, l, d});
  return diff::dropout(block.proj(ctx), config_.dropout, training, rng);
}

Tensor TransformerBackbone::forward(const Tensor& x, const AttentionMask& mask, bool training, Rng& rng) const {
  if (x.dim() != 3 || x.size(2) != config_.embed_dim) {
    throw diff::ShapeError("transformer input must be [B, L, " + std::to_string(config_.embed_dim) + "], got " +
                           diff::to_string(x.shape()));
  }
  Tensor h = x;
  for (const auto& block : blocks_) {
    h = h + attention(block, block.ln1(h), mask, training, rng);
    Tensor m = block.fc2(diff::relu(block.fc1(block.ln2(h))));
    h = h + diff::dropout(m, config_.dropout, training, rng);
  }
  return final_ln_(h);
}

SequenceInput SequenceInput::from_batch(const data::Batch& batch) {
  SequenceInput in;
  in.batch = batch.batch_size;
  in.context_length = batch.context_length;
  const std::size_t b = batch.batch_size;
  const std::size_t k = batch.context_length;
  in.states = Tensor::from({b, k, batch.state_dim}, batch.states);
  in.actions = Tensor::from({b, k, batch.action_dim}, batch.actions);
  in.rtg = Tensor::from({b, k, 1}, batch.rtg);
  in.timesteps = batch.timesteps;
  in.mask = batch.mask;
  return in;
}

Tensor interleave_tokens(const std::vector<Tensor>& modalities, std::size_t batch, std::size_t steps) {
  const std::size_t m = modalities.size();
  const std::size_t d = modalities.front().shape().back();
  std::vector<Tensor> flat;
  flat.reserve(m);
  for (const auto& t : modalities) flat.push_back(diff::reshape(t, {batch * steps, d}));
  Tensor stacked = diff::concat_rows(flat);  // [M*B*K, D]
  std::vector<std::size_t> order;
  order.reserve(m * batch * steps);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t k = 0; k < steps; ++k) {
      for (std::size_t i = 0; i < m; ++i) order.push_back(i * batch * steps + b * steps + k);
    }
  }
  return diff::reshape(diff::gather_rows(stacked, order), {batch, m * steps, d});
}

}  // namespace cgdt::models
