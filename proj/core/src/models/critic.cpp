#include "cgdt/models/critic.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numbers>

#include "cgdt/diff/ops.hpp"
#include "cgdt/models/checkpoint.hpp"

namespace cgdt::models {

using diff::Tensor;
using nlohmann::json;

GaussianCritic::GaussianCritic(TransformerConfig config, std::size_t state_dim, data::ActionSpace space,
                               std::uint64_t seed, double sigma_floor)
    : config_(config), state_dim_(state_dim), space_(space), sigma_floor_(sigma_floor) {
  config_.validate();
  if (state_dim_ == 0) throw std::invalid_argument("state_dim must be >= 1");
  if (!(sigma_floor_ > 0.0)) throw std::invalid_argument("sigma floor must be positive");
  Rng init = make_rng(seed, 0xc217c);
  const std::size_t d = config_.embed_dim;
  embed_state_ = Linear(params_, "critic.embed_state", state_dim_, d, init);
  embed_action_ = Linear(params_, "critic.embed_action", space_.encoded_dim(), d, init);
  if (config_.positional_encoding) {
    std::normal_distribution<double> dist(0.0, 0.02);
    std::vector<double> v(config_.max_timestep * d);
    for (auto& x : v) x = dist(init);
    embed_timestep_ = params_.add("critic.embed_timestep", Tensor::from({config_.max_timestep, d}, std::move(v)));
  }
  embed_ln_ = LayerNorm(params_, "critic.embed_ln", d);
  backbone_ = TransformerBackbone(config_, params_, "critic.transformer", init);
  head_ = Linear(params_, "critic.head", d, 2, init);
}

ReturnDistribution GaussianCritic::forward(const SequenceInput& input) const {
  Rng unused(0);
  return forward(input, false, unused);
}

ReturnDistribution GaussianCritic::forward(const SequenceInput& input, bool training, Rng& rng) const {
  return run(input, {}, training, rng).dataset;
}

std::vector<ReturnDistribution> GaussianCritic::evaluate_candidates(const SequenceInput& input,
                                                                    const std::vector<Tensor>& candidates) const {
  Rng unused(0);
  return run(input, candidates, false, unused).candidates;
}

ReturnDistribution GaussianCritic::head(const Tensor& hidden, std::size_t batch, std::size_t steps) const {
  Tensor out = head_(hidden);  // [B*K, 2]
  ReturnDistribution r;
  r.mean = diff::reshape(diff::slice(out, 1, 0, 1), {batch, steps});
  r.stddev = diff::reshape(diff::add_scalar(diff::softplus(diff::slice(out, 1, 1, 1)), sigma_floor_), {batch, steps});
  return r;
}

GaussianCritic::Outputs GaussianCritic::run(const SequenceInput& in, const std::vector<Tensor>& candidates,
                                            bool training, Rng& rng) const {
  const std::size_t b = in.batch;
  const std::size_t k = in.context_length;
  const std::size_t ad = space_.encoded_dim();
  if (k > config_.context_length) {
    throw std::invalid_argument("window of " + std::to_string(k) + " steps exceeds context length " +
                                std::to_string(config_.context_length));
  }
  if (in.states.shape() != diff::Shape{b, k, state_dim_} || in.actions.shape() != diff::Shape{b, k, ad} ||
      in.mask.size() != b * k || in.timesteps.size() != b * k) {
    throw diff::ShapeError("critic input shapes do not match the model: states " + diff::to_string(in.states.shape()) +
                           ", actions " + diff::to_string(in.actions.shape()));
  }
  for (const auto& c : candidates) {
    if (c.shape() != diff::Shape{b, k, ad}) {
      throw diff::ShapeError("candidate actions " + diff::to_string(c.shape()) + " do not match the input window");
    }
  }
  const std::size_t d = config_.embed_dim;
  const std::size_t n_cand = candidates.size();
  Tensor time;
  if (config_.positional_encoding) {
    std::vector<std::size_t> ts(in.timesteps);
    for (auto& t : ts) t = std::min(t, config_.max_timestep - 1);
    time = diff::reshape(diff::embedding(embed_timestep_, ts), {b, k, d});
  }
  auto with_time = [&](Tensor x) { return time.defined() ? x + time : x; };
  Tensor s = with_time(embed_state_(in.states));
  Tensor a = with_time(embed_action_(in.actions));
  Tensor tokens = interleave_tokens({s, a}, b, k);  // [B, 2K, D]
  if (n_cand > 0) {
    // Layout per batch row: 2K real tokens, then K tokens per candidate set.
    std::vector<Tensor> rows{diff::reshape(tokens, {b * 2 * k, d})};
    for (const auto& c : candidates) rows.push_back(diff::reshape(with_time(embed_action_(c)), {b * k, d}));
    Tensor stacked = diff::concat_rows(rows);
    std::vector<std::size_t> order;
    const std::size_t len = (2 + n_cand) * k;
    order.reserve(b * len);
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < 2 * k; ++j) order.push_back(i * 2 * k + j);
      for (std::size_t c = 0; c < n_cand; ++c) {
        const std::size_t base = b * 2 * k + c * b * k;
        for (std::size_t t = 0; t < k; ++t) order.push_back(base + i * k + t);
      }
    }
    tokens = diff::reshape(diff::gather_rows(stacked, order), {b, len, d});
  }
  tokens = diff::dropout(embed_ln_(tokens), config_.dropout, training, rng);

  const std::size_t l = (2 + n_cand) * k;
  AttentionMask allowed(b * l * l, 0);
  for (std::size_t i = 0; i < b; ++i) {
    const std::uint8_t* m = in.mask.data() + i * k;
    std::uint8_t* rows = allowed.data() + i * l * l;
    for (std::size_t q = 0; q < 2 * k; ++q) {
      if (!m[q / 2]) continue;
      for (std::size_t j = 0; j <= q; ++j) rows[q * l + j] = m[j / 2];
    }
    for (std::size_t c = 0; c < n_cand; ++c) {
      for (std::size_t t = 0; t < k; ++t) {
        if (!m[t]) continue;
        const std::size_t q = 2 * k + c * k + t;
        // s_{<=t} and a_{<t}: real tokens 0 .. 2t.
        for (std::size_t j = 0; j <= 2 * t; ++j) rows[q * l + j] = m[j / 2];
        rows[q * l + q] = 1;
      }
    }
  }
  Tensor hidden = diff::reshape(backbone_.forward(tokens, allowed, training, rng), {b * l, d});

  Outputs out;
  std::vector<std::size_t> action_rows;
  action_rows.reserve(b * k);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t t = 0; t < k; ++t) action_rows.push_back(i * l + 2 * t + 1);
  }
  out.dataset = head(diff::gather_rows(hidden, action_rows), b, k);
  for (std::size_t c = 0; c < n_cand; ++c) {
    std::vector<std::size_t> cand_rows;
    cand_rows.reserve(b * k);
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t t = 0; t < k; ++t) cand_rows.push_back(i * l + 2 * k + c * k + t);
    }
    out.candidates.push_back(head(diff::gather_rows(hidden, cand_rows), b, k));
  }
  return out;
}

json GaussianCritic::to_json() const {
  return json{{"format", kCheckpointFormat},
              {"model", "critic"},
              {"config", config_},
              {"state_dim", state_dim_},
              {"action_space", action_space_to_json(space_)},
              {"sigma_floor", sigma_floor_},
              {"return_scale", return_scale_},
              {"parameters", parameters_to_json(params_)}};
}

GaussianCritic GaussianCritic::from_json(const json& j) {
  if (checkpoint_kind(j) != "critic") throw std::invalid_argument("checkpoint is not a critic");
  GaussianCritic model(j.at("config").get<TransformerConfig>(), j.at("state_dim").get<std::size_t>(),
                       action_space_from_json(j.at("action_space")), 0, j.at("sigma_floor").get<double>());
  model.return_scale_ = j.at("return_scale").get<double>();
  parameters_from_json(j.at("parameters"), model.params_);
  return model;
}

Tensor gaussian_nll(const Tensor& mean, const Tensor& stddev, const Tensor& target) {
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  Tensor resid = diff::div(diff::sub(target, mean), stddev);
  return diff::add_scalar(diff::add(diff::log(stddev), diff::mul_scalar(diff::square(resid), 0.5)), half_log_2pi);
}

double gaussian_nll(double mean, double stddev, double target) {
  if (!(stddev > 0.0)) throw std::invalid_argument("gaussian_nll: sigma must be positive");
  const double u = (target - mean) / stddev;
  return 0.5 * std::log(2.0 * std::numbers::pi * stddev * stddev) + 0.5 * u * u;
}

}  // namespace cgdt::models
