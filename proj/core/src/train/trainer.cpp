#include "cgdt/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cgdt/common/random.hpp"
#include "cgdt/data/sampling.hpp"
#include "cgdt/diff/ops.hpp"
#include "cgdt/diff/optimizer.hpp"
#include "cgdt/train/losses.hpp"

namespace cgdt::train {

using diff::Tensor;
using nlohmann::json;

namespace {

// RNG stream ids, fixed so runs are reproducible from the seed alone.
constexpr std::uint64_t kCriticBatchStream = 11;
constexpr std::uint64_t kCriticDropoutStream = 12;
constexpr std::uint64_t kPolicyBatchStream = 21;
constexpr std::uint64_t kPolicyDropoutStream = 22;
constexpr std::uint64_t kCriticInitStream = 31;
constexpr std::uint64_t kPolicyInitStream = 32;
constexpr std::uint64_t kValidationStream = 41;
constexpr std::size_t kValidationWindows = 4096;
constexpr std::size_t kValidationChunk = 512;

// Frees the critic from gradient tracking for the lifetime of the guard.
class FreezeGuard {
 public:
  explicit FreezeGuard(const diff::ParameterSet& params) : tensors_(params.tensors()) {
    for (auto& t : tensors_) {
      flags_.push_back(t.requires_grad());
      t.set_requires_grad(false);
    }
  }
  ~FreezeGuard() {
    for (std::size_t i = 0; i < tensors_.size(); ++i) tensors_[i].set_requires_grad(flags_[i]);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<Tensor> tensors_;
  std::vector<bool> flags_;
};

void check_finite(const char* phase, std::int64_t step, const char* what, double value) {
  if (!std::isfinite(value)) {
    throw TrainingDiverged(phase, step, std::string(what) + " is " + std::to_string(value));
  }
}

data::ActionSpace resolve_action_space(const data::Dataset& dataset, const TrainConfig& config) {
  auto space = config.action_space ? *config.action_space : infer_action_space(dataset);
  for (const auto& t : dataset) {
    for (const auto& a : t.actions) {
      if (!space.contains(a)) throw std::invalid_argument("dataset action outside the configured action space");
    }
  }
  return space;
}

std::size_t state_dim_of(const data::Dataset& dataset) {
  if (dataset.empty()) throw std::invalid_argument("training requires a non-empty dataset");
  for (const auto& t : dataset) t.validate();
  const std::size_t dim = dataset.front().states.front().size();
  for (const auto& t : dataset) {
    for (const auto& s : t.states) {
      if (s.size() != dim) throw std::invalid_argument("dataset states have inconsistent dimensions");
    }
  }
  return dim;
}

Tensor rtg_targets(const data::Batch& batch) {
  return Tensor::from({batch.batch_size, batch.context_length}, batch.rtg);
}

json nan_to_null(const std::vector<double>& values) {
  json out = json::array();
  for (double v : values) out.push_back(std::isfinite(v) ? json(v) : json(nullptr));
  return out;
}

}  // namespace

TrainingDiverged::TrainingDiverged(std::string phase, std::int64_t step, std::string what)
    : std::runtime_error(phase + " training diverged at step " + std::to_string(step) + ": " + what),
      phase_(std::move(phase)),
      step_(step) {}

json to_json(const RunRecord& r) {
  json validation = json::array();
  for (const auto& v : r.validation) validation.push_back(json{{"step", v.step}, {"nll", v.nll}});
  return json{{"kind", r.kind},
              {"steps_run", r.steps_run},
              {"best_step", r.best_step},
              {"early_stop_step", r.early_stop_step ? json(*r.early_stop_step) : json(nullptr)},
              {"parameter_count", r.parameter_count},
              {"return_scale", r.return_scale},
              {"optimizer", "adamw (decoupled weight decay; substitutes LAMB)"},
              {"config", r.config},
              {"losses",
               {{"critic", nan_to_null(r.critic_loss)},
                {"bc", nan_to_null(r.bc_loss)},
                {"guidance", nan_to_null(r.guidance_loss)},
                {"total", nan_to_null(r.total_loss)},
                {"guidance_weight", r.guidance_weight}}},
              {"validation_nll", validation}};
}

double validation_nll(const models::GaussianCritic& critic, const data::Dataset& dataset, std::size_t max_windows,
                      std::uint64_t seed) {
  if (dataset.empty()) throw std::invalid_argument("validation_nll: empty dataset");
  const auto rtg = data::compute_rtg(dataset);
  const std::size_t k = critic.config().context_length;
  auto windows = data::all_windows(rtg, k);
  if (windows.size() > max_windows) {
    Rng rng = make_rng(seed, kValidationStream);
    std::shuffle(windows.begin(), windows.end(), rng);
    windows.resize(max_windows);
  }
  diff::NoGradScope no_grad;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t begin = 0; begin < windows.size(); begin += kValidationChunk) {
    const std::size_t end = std::min(windows.size(), begin + kValidationChunk);
    std::span<const data::Subsequence> chunk(windows.data() + begin, end - begin);
    const auto batch = data::collate(rtg, chunk, k, critic.action_space(), critic.return_scale());
    const auto dist = critic.forward(models::SequenceInput::from_batch(batch));
    for (std::size_t i = 0; i < batch.mask.size(); ++i) {
      if (!batch.mask[i]) continue;
      total += models::gaussian_nll(dist.mean[i], dist.stddev[i], batch.rtg[i]);
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

CriticRun train_critic(const data::Dataset& dataset, const TrainConfig& config) {
  config.validate();
  const std::size_t state_dim = state_dim_of(dataset);
  const auto space = resolve_action_space(dataset, config);
  const double scale = data::return_scale(dataset);

  const auto split = data::split(dataset.size(), 1.0 - config.validation_fraction, config.seed);
  data::Dataset train_set = data::select(dataset, split.train);
  const data::Dataset val_set = data::select(dataset, split.validation);
  if (config.critic_data_fraction < 1.0) train_set = data::filter_top_return(train_set, config.critic_data_fraction);
  const auto train_rtg = data::compute_rtg(train_set);

  models::GaussianCritic critic(config.resolved_critic_model(), state_dim, space,
                                derive_seed(config.seed, kCriticInitStream), config.sigma_floor);
  critic.set_return_scale(scale);
  auto& params = critic.parameters();
  diff::AdamW opt(params, config.optimizer());
  Rng batch_rng = make_rng(config.seed, kCriticBatchStream);
  Rng dropout_rng = make_rng(config.seed, kCriticDropoutStream);

  RunRecord record;
  record.kind = "critic";
  record.config = to_json(config);
  record.parameter_count = params.count();
  record.return_scale = scale;
  record.critic_loss.reserve(static_cast<std::size_t>(config.critic_iterations));

  double best = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best_params;
  std::int64_t stale = 0;
  const std::size_t k = config.context_length;

  for (std::int64_t step = 1; step <= config.critic_iterations; ++step) {
    const auto windows = data::sample_batch(train_rtg, config.batch_size, k, batch_rng);
    const auto batch = data::collate(train_rtg, windows, k, space, scale);
    const auto input = models::SequenceInput::from_batch(batch);
    diff::Tape tape;
    double loss_value = 0.0;
    {
      diff::Tape::Scope scope(tape);
      const auto dist = critic.forward(input, true, dropout_rng);
      Tensor loss = masked_mean(
          asymmetric_critic_loss(dist.mean, dist.stddev, rtg_targets(batch), config.tau_c, config.critic_indicator_flip),
          batch.mask);
      loss_value = loss.item();
      check_finite("critic", step, "loss", loss_value);
      params.zero_grad();
      tape.backward(loss);
    }
    try {
      opt.step();
    } catch (const diff::NonFiniteGradient& e) {
      throw TrainingDiverged("critic", step, e.what());
    }
    record.critic_loss.push_back(loss_value);
    record.total_loss.push_back(loss_value);
    record.steps_run = step;

    const bool eval_now = step % config.eval_interval == 0 || step == config.critic_iterations;
    if (eval_now && !val_set.empty()) {
      const double nll = validation_nll(critic, val_set, kValidationWindows, config.seed);
      record.validation.push_back({step, nll});
      if (nll < best) {
        best = nll;
        best_params = params.snapshot();
        record.best_step = step;
        stale = 0;
      } else if (++stale >= config.early_stop_patience) {
        record.early_stop_step = step;
        break;
      }
    }
  }
  if (!best_params.empty()) {
    params.restore(best_params);
  } else {
    record.best_step = record.steps_run;
  }
  return CriticRun{std::move(critic), std::move(record)};
}

namespace {

PolicyRun run_policy_training(const data::Dataset& dataset, const models::GaussianCritic* critic,
                              const TrainConfig& config, const char* kind) {
  config.validate();
  const std::size_t state_dim = state_dim_of(dataset);
  const auto space = resolve_action_space(dataset, config);
  const double scale = data::return_scale(dataset);
  const double alpha = critic ? config.alpha : 0.0;
  if (critic) {
    if (critic->state_dim() != state_dim || !(critic->action_space() == space)) {
      throw std::invalid_argument("critic checkpoint does not match the dataset's state/action dimensions");
    }
    if (critic->config().context_length < config.context_length) {
      throw std::invalid_argument("critic context length " + std::to_string(critic->config().context_length) +
                                  " is shorter than the policy context length " +
                                  std::to_string(config.context_length));
    }
    if (std::abs(critic->return_scale() - scale) > 1e-12 * scale) {
      throw std::invalid_argument("critic return scale " + std::to_string(critic->return_scale()) +
                                  " differs from the dataset's " + std::to_string(scale));
    }
  }
  const auto rtg = data::compute_rtg(dataset);

  models::DecisionTransformer policy(config.resolved_policy_model(), state_dim, space,
                                     derive_seed(config.seed, kPolicyInitStream));
  policy.set_return_scale(scale);
  auto& params = policy.parameters();
  diff::AdamW opt(params, config.optimizer());
  Rng batch_rng = make_rng(config.seed, kPolicyBatchStream);
  Rng dropout_rng = make_rng(config.seed, kPolicyDropoutStream);
  std::optional<FreezeGuard> freeze;
  if (critic) freeze.emplace(critic->parameters());

  // One-hot candidates for the exact expectation over discrete actions.
  const std::size_t k = config.context_length;
  const std::size_t b = config.batch_size;
  std::vector<Tensor> one_hots;
  if (space.discrete) {
    for (std::size_t a = 0; a < space.n; ++a) {
      std::vector<double> v(b * k * space.n, 0.0);
      for (std::size_t i = 0; i < b * k; ++i) v[i * space.n + a] = 1.0;
      one_hots.push_back(Tensor::from({b, k, space.n}, std::move(v)));
    }
  }

  RunRecord record;
  record.kind = kind;
  record.config = to_json(config);
  record.parameter_count = params.count();
  record.return_scale = scale;
  const auto n = config.policy_iterations;

  for (std::int64_t step = 1; step <= n; ++step) {
    const double weight = alpha * static_cast<double>(step) / static_cast<double>(n);
    const auto windows = data::sample_batch(rtg, b, k, batch_rng);
    const auto batch = data::collate(rtg, windows, k, space, scale);
    const auto input = models::SequenceInput::from_batch(batch);
    diff::Tape tape;
    double bc_value = 0.0;
    double guidance_value = std::numeric_limits<double>::quiet_NaN();
    double total_value = 0.0;
    {
      diff::Tape::Scope scope(tape);
      const auto out = policy.forward(input, true, dropout_rng);
      Tensor bc;
      if (space.discrete) {
        bc = masked_mean(diff::neg(diff::select_last(diff::log_softmax(out.logits), batch.action_indices)), batch.mask);
      } else {
        bc = masked_mean(diff::sum_last(diff::square(diff::sub(out.action, input.actions))), batch.mask);
      }
      Tensor total = bc;
      if (critic && weight > 0.0) {
        const Tensor target = rtg_targets(batch);
        Tensor guidance_el;
        if (space.discrete) {
          std::vector<models::ReturnDistribution> dists;
          {
            diff::NoGradScope no_grad;
            dists = critic->evaluate_candidates(input, one_hots);
          }
          const Tensor probs = diff::softmax(out.logits);
          for (std::size_t a = 0; a < space.n; ++a) {
            Tensor pa = diff::reshape(diff::slice(probs, 2, a, 1), {b, k});
            Tensor term = diff::mul(pa, expectile_guidance_loss(dists[a].mean, dists[a].stddev, target, config.tau_p));
            guidance_el = guidance_el.defined() ? diff::add(guidance_el, term) : term;
          }
        } else {
          const auto dists = critic->evaluate_candidates(input, {out.action});
          guidance_el = expectile_guidance_loss(dists[0].mean, dists[0].stddev, target, config.tau_p);
        }
        Tensor guidance = masked_mean(guidance_el, batch.mask);
        guidance_value = guidance.item();
        total = diff::add(bc, diff::mul_scalar(guidance, weight));
      }
      bc_value = bc.item();
      total_value = total.item();
      check_finite(kind, step, "loss", total_value);
      params.zero_grad();
      tape.backward(total);
    }
    try {
      opt.step();
    } catch (const diff::NonFiniteGradient& e) {
      throw TrainingDiverged(kind, step, e.what());
    }
    record.bc_loss.push_back(bc_value);
    record.guidance_loss.push_back(guidance_value);
    record.total_loss.push_back(total_value);
    record.guidance_weight.push_back(weight);
    record.steps_run = step;
  }
  record.best_step = record.steps_run;
  return PolicyRun{std::move(policy), std::move(record)};
}

}  // namespace

PolicyRun train_policy(const data::Dataset& dataset, const models::GaussianCritic& critic, const TrainConfig& config) {
  return run_policy_training(dataset, &critic, config, "policy");
}

PolicyRun train_dt_baseline(const data::Dataset& dataset, const TrainConfig& config) {
  return run_policy_training(dataset, nullptr, config, "dt");
}

}  // namespace cgdt::train
