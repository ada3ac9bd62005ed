#include "cgdt/eval/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cgdt/data/sampling.hpp"
#include "cgdt/diff/ops.hpp"

namespace cgdt::eval {

namespace {

struct LiveEpisode {
  envs::EnvState state;
  EpisodeHistory history;
  Rng rng;
  double total = 0.0;
};

// Chooses one action per listed episode.
using BatchActor = std::function<void(std::vector<LiveEpisode*>&, std::vector<data::Action>&)>;

RolloutResult run(const BatchActor& act, const envs::EnvSpec& env, double target_return, std::size_t n_episodes,
                  std::uint64_t seed, const RolloutOptions& options) {
  env.validate();
  if (options.chunk_size == 0) throw std::invalid_argument("rollout chunk size must be positive");
  RolloutResult result;
  result.returns.reserve(n_episodes);
  for (std::size_t begin = 0; begin < n_episodes; begin += options.chunk_size) {
    const std::size_t end = std::min(n_episodes, begin + options.chunk_size);
    std::vector<LiveEpisode> live;
    live.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
      LiveEpisode e{envs::reset(env), {}, make_rng(seed, i), 0.0};
      e.history.states.push_back(e.state.observation);
      e.history.returns_to_go.push_back(target_return);
      live.push_back(std::move(e));
    }
    std::vector<LiveEpisode*> active;
    for (auto& e : live) active.push_back(&e);
    std::vector<data::Action> actions;
    while (!active.empty()) {
      for (auto* e : active) {
        if (e->history.returns_to_go.back() < 0.0) ++result.negative_rtg_steps;
      }
      actions.clear();
      act(active, actions);
      std::vector<LiveEpisode*> still;
      for (std::size_t j = 0; j < active.size(); ++j) {
        auto& e = *active[j];
        const auto out = envs::step(env, e.state, actions[j], e.rng);
        e.history.actions.push_back(actions[j]);
        e.history.rewards.push_back(out.reward);
        e.total += out.reward;
        e.state = out.next;
        if (!out.done) {
          e.history.states.push_back(e.state.observation);
          e.history.returns_to_go.push_back(e.history.returns_to_go.back() - out.reward);
          still.push_back(&e);
        }
      }
      active.swap(still);
    }
    for (auto& e : live) {
      result.returns.push_back(e.total);
      if (options.keep_traces) result.episodes.push_back(Episode{std::move(e.history), e.total});
    }
  }
  return result;
}

// Model inputs for the most recent K steps of each episode, left-padded.
data::Batch build_batch(const models::DecisionTransformer& policy, const std::vector<LiveEpisode*>& episodes) {
  const auto& space = policy.action_space();
  data::Batch batch;
  batch.batch_size = episodes.size();
  batch.context_length = policy.config().context_length;
  batch.state_dim = policy.state_dim();
  batch.action_dim = space.encoded_dim();
  const std::size_t b = batch.batch_size;
  const std::size_t k = batch.context_length;
  batch.states.assign(b * k * batch.state_dim, 0.0);
  batch.actions.assign(b * k * batch.action_dim, 0.0);
  batch.rtg.assign(b * k, 0.0);
  batch.rewards.assign(b * k, 0.0);
  batch.timesteps.assign(b * k, 0);
  batch.mask.assign(b * k, 0);
  const double scale = policy.return_scale();
  for (std::size_t i = 0; i < b; ++i) {
    const auto& h = episodes[i]->history;
    const std::size_t t = h.states.size() - 1;
    const std::size_t len = std::min(k, t + 1);
    const std::size_t first = t + 1 - len;
    for (std::size_t j = 0; j < len; ++j) {
      const std::size_t step = first + j;
      const std::size_t slot = i * k + (k - len) + j;
      const auto& s = h.states[step];
      if (s.size() != batch.state_dim) throw std::invalid_argument("environment state does not match the policy");
      std::copy(s.begin(), s.end(), batch.states.begin() + static_cast<std::ptrdiff_t>(slot * batch.state_dim));
      if (step < t) {
        space.encode(h.actions[step], batch.actions.data() + slot * batch.action_dim);
        batch.rewards[slot] = h.rewards[step];
      }
      batch.rtg[slot] = h.returns_to_go[step] / scale;
      batch.timesteps[slot] = step;
      batch.mask[slot] = 1;
    }
  }
  return batch;
}

std::size_t sample_categorical(const double* probs, std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double u = uniform(rng);
  double acc = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    acc += probs[a];
    if (u < acc) return a;
  }
  return n - 1;
}

}  // namespace

RolloutResult rollout(const models::DecisionTransformer& policy, const envs::EnvSpec& env, double target_return,
                      std::size_t n_episodes, std::uint64_t seed, const RolloutOptions& options) {
  if (env.state_dim() != policy.state_dim() || !(env.action_space() == policy.action_space())) {
    throw std::invalid_argument("policy checkpoint does not match the environment '" + envs::to_string(env.kind) +
                                "'");
  }
  const auto& space = policy.action_space();
  auto act = [&](std::vector<LiveEpisode*>& episodes, std::vector<data::Action>& actions) {
    const auto batch = build_batch(policy, episodes);
    diff::NoGradScope no_grad;
    const auto out = policy.forward(models::SequenceInput::from_batch(batch));
    const std::size_t k = batch.context_length;
    if (space.discrete) {
      const auto probs = diff::softmax(out.logits);
      const auto& p = probs.data();
      for (std::size_t i = 0; i < episodes.size(); ++i) {
        const double* row = p.data() + (i * k + k - 1) * space.n;
        actions.push_back(data::Action::discrete(static_cast<int>(sample_categorical(row, space.n, episodes[i]->rng))));
      }
    } else {
      const auto& a = out.action.data();
      for (std::size_t i = 0; i < episodes.size(); ++i) {
        const auto* row = a.data() + (i * k + k - 1) * space.dim;
        actions.push_back(data::Action::continuous(std::vector<double>(row, row + space.dim)));
      }
    }
  };
  return run(act, env, target_return, n_episodes, seed, options);
}

RolloutResult rollout(const ScriptedPolicy& policy, const envs::EnvSpec& env, double target_return,
                      std::size_t n_episodes, std::uint64_t seed, const RolloutOptions& options) {
  auto act = [&](std::vector<LiveEpisode*>& episodes, std::vector<data::Action>& actions) {
    for (auto* e : episodes) actions.push_back(policy(e->history, e->rng));
  };
  return run(act, env, target_return, n_episodes, seed, options);
}

std::vector<double> initial_action_probabilities(const models::DecisionTransformer& policy, const envs::EnvSpec& env,
                                                 double target_return) {
  const auto& space = policy.action_space();
  if (!space.discrete) throw std::invalid_argument("action probabilities need a discrete policy");
  LiveEpisode e{envs::reset(env), {}, Rng(0), 0.0};
  e.history.states.push_back(e.state.observation);
  e.history.returns_to_go.push_back(target_return);
  std::vector<LiveEpisode*> one{&e};
  const auto batch = build_batch(policy, one);
  diff::NoGradScope no_grad;
  const auto probs = diff::softmax(policy.forward(models::SequenceInput::from_batch(batch)).logits);
  const std::size_t k = batch.context_length;
  const auto* row = probs.data().data() + (k - 1) * space.n;
  return std::vector<double>(row, row + space.n);
}

}  // namespace cgdt::eval
