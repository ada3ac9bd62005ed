// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cgdt/data/sampling.hpp"
#include "cgdt/diff/ops.hpp"
#include "cgdt/envs/env.hpp"
#include "cgdt/eval/protocols.hpp"
#include "cgdt/train/losses.hpp"
#include "cgdt/train/trainer.hpp"
#include "support.hpp"

using namespace cgdt;
using diff::Tensor;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [x]");
    pass = pass && ok;
  }
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

const std::vector<std::uint64_t> kSeeds{0, 1, 2, 3, 4};
constexpr std::size_t kEpisodes = 1000;

train::TrainConfig small_run(std::int64_t iterations, double alpha, std::uint64_t seed) {
  train::TrainConfig c;
  c.critic_iterations = iterations;
  c.policy_iterations = iterations;
  c.alpha = alpha;
  c.seed = seed;
  c.batch_size = 128;
  c.eval_interval = 50;
  for (auto* m : {&c.policy_model, &c.critic_model}) {
    m->embed_dim = 32;
    m->n_layers = 1;
  }
  return c;
}

std::vector<double> pooled_returns(const models::DecisionTransformer& policy, const envs::EnvSpec& env, double target,
                                   std::uint64_t seed) {
  return eval::rollout(policy, env, target, kEpisodes, seed).returns;
}

void append(std::vector<double>& to, const std::vector<double>& from) { to.insert(to.end(), from.begin(), from.end()); }

Outcome bandit_bayes_optimality() {
  Outcome out;
  for (double p : {0.1, 0.2, 0.3, 0.4}) {
    const auto env = envs::EnvSpec::bernoulli_bandit(p);
    std::vector<double> cgdt_returns;
    std::vector<double> dt_returns;
    for (auto seed : kSeeds) {
      const auto data = envs::generate_dataset(env, {}, 10000, seed);
      const auto cfg = small_run(300, 10.0, seed);
      const auto critic = train::train_critic(data, cfg);
      const auto policy = train::train_policy(data, critic.critic, cfg);
      const auto dt = train::train_dt_baseline(data, cfg);
      append(cgdt_returns, pooled_returns(policy.policy, env, 1.0, seed));
      append(dt_returns, pooled_returns(dt.policy, env, 1.0, seed));
    }
    const auto c = eval::summarize(cgdt_returns);
    const auto d = eval::summarize(dt_returns);
    out.require(c.mean >= (1 - p) - 0.05, "p=" + fmt("%.1f", p) + " cgdt " + fmt("%.3f", c.mean) + " >= " +
                                              fmt("%.2f", (1 - p) - 0.05));
    out.require(std::abs(d.mean - 0.5) <= 0.07, "dt " + fmt("%.3f", d.mean) + " in 0.5+-0.07");
  }
  return out;
}

Outcome loss_oracles() {
  Outcome out;
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n(0.0, 2.0);
  std::uniform_real_distribution<double> pos(0.05, 3.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double mu = n(rng);
    const double sigma = pos(rng);
    const double r = n(rng);
    const double a = train::asymmetric_critic_loss(mu, sigma, r, 0.5);
    const double b = 0.5 * models::gaussian_nll(mu, sigma, r);
    worst = std::max(worst, std::abs(a - b) / std::max(std::abs(b), 1e-300));
  }
  out.require(worst <= 4 * std::numeric_limits<double>::epsilon(), "tau_c=0.5 max rel diff " + fmt("%.1e", worst));
  // Hand table for u = +1, -1: tau and 1 - tau. The decimal 0.3 is not
  // 1 - 0.7 in binary, so exactness is checked against the hand formula and
  // the decimal table to within one ulp.
  const std::vector<double> table{0.3, 0.7, 0.5, 0.5, 0.7, 0.3};
  std::size_t i = 0;
  bool exact = true;
  bool decimal = true;
  for (double tau : {0.3, 0.5, 0.7}) {
    for (double u : {1.0, -1.0}) {
      const double v = train::expectile_loss(u, tau);
      exact = exact && v == (u > 0 ? tau : 1.0 - tau);
      decimal = decimal && std::abs(v - table[i]) <= std::numeric_limits<double>::epsilon() * table[i];
      ++i;
    }
  }
  out.require(exact, "expectile table exact");
  out.require(decimal, "decimal table within 1 ulp");
  return out;
}

models::SequenceInput sample_input(const data::Dataset& d, std::size_t k, const data::ActionSpace& space,
                                   data::Batch& batch) {
  const auto rtg = data::compute_rtg(d);
  Rng rng(17);
  const auto w = data::sample_batch(rtg, 6, k, rng);
  batch = data::collate(rtg, w, k, space, data::return_scale(d));
  return models::SequenceInput::from_batch(batch);
}

Outcome gradient_correctness() {
  Outcome out;
  models::TransformerConfig cfg;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.embed_dim = 8;
  cfg.dropout = 0.0;
  cfg.max_timestep = 8;

  {
    const auto env = envs::EnvSpec::stitch_chain();
    const auto d = envs::generate_dataset(env, {}, 30, 1);
    cfg.context_length = 3;
    models::GaussianCritic critic(cfg, env.state_dim(), env.action_space(), 2);
    testing::randomize(critic.parameters(), 0.3, 2);
    data::Batch batch;
    const auto input = sample_input(d, 3, env.action_space(), batch);
    const auto target = Tensor::from({batch.batch_size, 3}, batch.rtg);
    const auto probes = testing::gradcheck(
        [&] {
          const auto r = critic.forward(input);
          return train::masked_mean(train::asymmetric_critic_loss(r.mean, r.stddev, target, 0.7), batch.mask);
        },
        critic.parameters().tensors(), 32, 3);
    const double e = testing::max_relative_error(probes);
    out.require(e < 1e-4 && probes.size() >= 20, "critic objective " + fmt("%.1e", e));
  }

  for (bool discrete : {true, false}) {
    const auto env = discrete ? envs::EnvSpec::stitch_chain() : envs::EnvSpec::continuous_bandit();
    const auto space = env.action_space();
    const std::size_t k = discrete ? 3 : 1;
    cfg.context_length = k;
    const auto d = envs::generate_dataset(env, {}, 30, 4);
    models::GaussianCritic critic(cfg, env.state_dim(), space, 5);
    critic.parameters().set_requires_grad(false);
    models::DecisionTransformer policy(cfg, env.state_dim(), space, 6);
    testing::randomize(critic.parameters(), 0.3, 5);
    testing::randomize(policy.parameters(), 0.3, 6);
    data::Batch batch;
    const auto input = sample_input(d, k, space, batch);
    const auto target = Tensor::from({batch.batch_size, k}, batch.rtg);
    std::vector<Tensor> one_hots;
    for (std::size_t a = 0; discrete && a < space.n; ++a) {
      std::vector<double> v(batch.batch_size * k * space.n, 0.0);
      for (std::size_t i = 0; i < batch.batch_size * k; ++i) v[i * space.n + a] = 1.0;
      one_hots.push_back(Tensor::from({batch.batch_size, k, space.n}, v));
    }
    auto loss = [&] {
      const auto o = policy.forward(input);
      Tensor bc;
      Tensor g;
      if (discrete) {
        bc = train::masked_mean(diff::neg(diff::select_last(diff::log_softmax(o.logits), batch.action_indices)),
                                batch.mask);
        const auto dists = critic.evaluate_candidates(input, one_hots);
        const auto probs = diff::softmax(o.logits);
        for (std::size_t a = 0; a < space.n; ++a) {
          auto pa = diff::reshape(diff::slice(probs, 2, a, 1), {batch.batch_size, k});
          auto term = diff::mul(pa, train::expectile_guidance_loss(dists[a].mean, dists[a].stddev, target, 0.7));
          g = g.defined() ? diff::add(g, term) : term;
        }
      } else {
        bc = train::masked_mean(diff::sum_last(diff::square(diff::sub(o.action, input.actions))), batch.mask);
        const auto dists = critic.evaluate_candidates(input, {o.action});
        g = train::expectile_guidance_loss(dists[0].mean, dists[0].stddev, target, 0.7);
      }
      return diff::add(bc, diff::mul_scalar(train::masked_mean(g, batch.mask), 0.8));
    };
    const auto probes = testing::gradcheck(loss, policy.parameters().tensors(), 32, 7);
    const double e = testing::max_relative_error(probes);
    out.require(e < 1e-4 && probes.size() >= 20,
                std::string(discrete ? "discrete" : "continuous") + " policy objective " + fmt("%.1e", e));
  }
  return out;
}

/// Mean predicted (mu, sigma) in raw return units over every step of `data`.
std::pair<double, double> critic_prediction(const models::GaussianCritic& critic, const data::Dataset& data) {
  const auto rtg = data::compute_rtg(data);
  const auto windows = data::all_windows(rtg, critic.config().context_length);
  const auto batch = data::collate(rtg, windows, critic.config().context_length, critic.action_space(),
                                   critic.return_scale());
  diff::NoGradScope no_grad;
  const auto r = critic.forward(models::SequenceInput::from_batch(batch));
  double mu = 0.0;
  double sigma = 0.0;
  for (std::size_t i = 0; i < r.mean.numel(); ++i) {
    mu += r.mean[i];
    sigma += r.stddev[i];
  }
  const double n = static_cast<double>(r.mean.numel());
  return {mu / n * critic.return_scale(), sigma / n * critic.return_scale()};
}

data::Dataset synthetic_returns(const std::function<double(Rng&)>& draw, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  data::Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    data::Trajectory t;
    t.states = {{1.0}};
    t.actions = {data::Action::discrete(static_cast<int>(rng() % 2))};
    t.rewards = {draw(rng)};
    d.push_back(std::move(t));
  }
  return d;
}

Outcome critic_recovery() {
  Outcome out;
  auto cfg = small_run(2000, 0.0, 0);
  cfg.batch_size = 256;
  {
    const auto data = synthetic_returns([](Rng& r) { return std::normal_distribution<double>(2.0, 0.5)(r); }, 10000, 1);
    const auto run = train::train_critic(data, cfg);
    const auto probe = data::Dataset(data.begin(), data.begin() + 500);
    const auto [mu, sigma] = critic_prediction(run.critic, probe);
    out.require(std::abs(mu - 2.0) <= 0.1, "mu " + fmt("%.3f", mu));
    out.require(std::abs(sigma - 0.5) <= 0.05, "sigma " + fmt("%.3f", sigma));
  }
  {
    const auto data = synthetic_returns([](Rng& r) { return static_cast<double>(r() % 2); }, 10000, 2);
    const auto probe = data::Dataset(data.begin(), data.begin() + 500);
    std::vector<double> mus;
    for (double tau : {0.7, 0.5, 0.3}) {
      auto c = cfg;
      c.tau_c = tau;
      mus.push_back(critic_prediction(train::train_critic(data, c).critic, probe).first);
    }
    out.require(mus[0] < mus[1] && mus[1] < mus[2], "bimodal mu(0.7) " + fmt("%.3f", mus[0]) + " < mu(0.5) " +
                                                       fmt("%.3f", mus[1]) + " < mu(0.3) " + fmt("%.3f", mus[2]));
  }
  return out;
}

Outcome continuous_consistency() {
  Outcome out;
  const auto env = envs::EnvSpec::continuous_bandit();
  const std::vector<double> lambdas{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  const double cap = envs::oracle(env).max_achievable;
  std::vector<std::vector<double>> cgdt(lambdas.size());
  std::vector<std::vector<double>> dt(lambdas.size());
  for (auto seed : kSeeds) {
    const auto data = envs::generate_dataset(env, {}, 10000, seed);
    const auto cfg = small_run(1000, 20.0, seed);
    const auto critic = train::train_critic(data, cfg);
    const auto policy = train::train_policy(data, critic.critic, cfg);
    const auto base = train::train_dt_baseline(data, cfg);
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
      append(cgdt[i], pooled_returns(policy.policy, env, lambdas[i], seed));
      append(dt[i], pooled_returns(base.policy, env, lambdas[i], seed));
    }
  }
  auto rows = [&](const std::vector<std::vector<double>>& returns) {
    std::vector<eval::LambdaRow> r(lambdas.size());
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
      r[i].lambda = lambdas[i];
      r[i].target = lambdas[i];
      r[i].clamped_target = std::min(lambdas[i], cap);
      r[i].achieved = eval::summarize(returns[i]);
    }
    return r;
  };
  const auto cr = rows(cgdt);
  const auto dr = rows(dt);
  const double cs = eval::consistency_score(cr);
  const double ds = eval::consistency_score(dr);
  out.require(cs <= ds, "score cgdt " + fmt("%.3f", cs) + " <= dt " + fmt("%.3f", ds));
  double worst = 0.0;
  for (const auto& r : cr) worst = std::max(worst, std::abs(r.achieved.mean - r.clamped_target));
  out.require(worst <= 0.1, "max |achieved - target| " + fmt("%.3f", worst));
  return out;
}

Outcome stitching() {
  Outcome out;
  const auto env = envs::EnvSpec::stitch_chain();
  std::vector<double> cgdt_returns;
  std::vector<double> dt_returns;
  for (auto seed : kSeeds) {
    const auto data = envs::generate_dataset(env, {}, 10000, seed);
    auto cfg = small_run(300, 10.0, seed);
    cfg.context_length = 2;
    const auto critic = train::train_critic(data, cfg);
    const auto policy = train::train_policy(data, critic.critic, cfg);
    const auto dt = train::train_dt_baseline(data, cfg);
    append(cgdt_returns, pooled_returns(policy.policy, env, 0.4, seed));
    append(dt_returns, pooled_returns(dt.policy, env, 1.0, seed));
  }
  const double c = eval::summarize(cgdt_returns).mean;
  const double d = eval::summarize(dt_returns).mean;
  out.require(c >= 0.35, "cgdt@0.4 " + fmt("%.3f", c) + " >= 0.35");
  out.require(d <= 0.2, "dt@1.0 " + fmt("%.3f", d) + " <= 0.2");
  return out;
}

Outcome pipeline_invariants() {
  Outcome out;
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n(0.0, 3.0);
  std::uniform_int_distribution<std::size_t> len(1, 20);
  bool rtg_ok = true;
  bool delay_ok = true;
  for (int i = 0; i < 100000; ++i) {
    data::Trajectory t;
    const auto l = len(rng);
    for (std::size_t s = 0; s < l; ++s) {
      t.states.push_back({0.0});
      t.actions.push_back(data::Action::discrete(0));
      t.rewards.push_back(n(rng));
    }
    const auto rt = data::compute_rtg(t);
    rtg_ok = rtg_ok && rt.rtg.back() == t.rewards.back();
    for (std::size_t s = 0; s + 1 < l; ++s) rtg_ok = rtg_ok && rt.rtg[s] == t.rewards[s] + rt.rtg[s + 1];
    delay_ok = delay_ok && data::compute_rtg(data::delay_rewards(t)).rtg[0] == rt.rtg[0];
  }
  out.require(rtg_ok, "rtg suffix sums exact on 1e5 trajectories");
  out.require(delay_ok, "delay_rewards conserves R_0");

  {
    data::Dataset d;
    for (std::size_t l : {2, 3, 5}) {
      data::Trajectory t;
      for (std::size_t s = 0; s < l; ++s) {
        t.states.push_back({0.0});
        t.actions.push_back(data::Action::discrete(0));
        t.rewards.push_back(0.0);
      }
      d.push_back(t);
    }
    Rng srng(5);
    const std::size_t draws = 100000;
    std::vector<double> counts(3, 0.0);
    for (const auto& s : data::sample_batch(data::compute_rtg(d), draws, 1, srng)) counts[s.trajectory] += 1;
    double chi2 = 0.0;
    const std::vector<double> p{0.2, 0.3, 0.5};
    for (std::size_t i = 0; i < 3; ++i) {
      const double e = p[i] * draws;
      chi2 += (counts[i] - e) * (counts[i] - e) / e;
    }
    out.require(chi2 < 13.82, "sampling chi2 " + fmt("%.2f", chi2) + " < 13.82");
  }

  {
    const auto env = envs::EnvSpec::stitch_chain();
    const auto data = envs::generate_dataset(env, {}, 1000, 7);
    auto cfg = small_run(50, 0.0, 7);
    cfg.context_length = 2;
    const auto critic = train::train_critic(data, cfg);
    const auto before = critic.critic.parameters().snapshot();
    const auto guided = train::train_policy(data, critic.critic, cfg);
    const auto dt = train::train_dt_baseline(data, cfg);
    out.require(guided.policy.parameters().snapshot() == dt.policy.parameters().snapshot(),
                "alpha=0 bit-identical to dt");
    cfg.alpha = 5.0;
    (void)train::train_policy(data, critic.critic, cfg);
    out.require(critic.critic.parameters().snapshot() == before, "critic unchanged by policy training");
  }
  return out;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"bandit Bayes-optimality", bandit_bayes_optimality},
      {"loss oracles", loss_oracles},
      {"gradient correctness", gradient_correctness},
      {"critic recovery", critic_recovery},
      {"continuous consistency", continuous_consistency},
      {"stitching", stitching},
      {"pipeline invariants", pipeline_invariants},
  };
  bool all = true;
  int index = 1;
  for (const auto& [name, run] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %d %-26s %s  %s  (%.0fs)\n", index++, name, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
    all = all && o.pass;
  }
  std::printf("criterion 8 full-scale benchmark numbers  N/A   desk-scale substitutes are criteria 1-7\n");
  return all ? 0 : 1;
}
