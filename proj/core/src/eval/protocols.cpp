#include "cgdt/eval/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cgdt/train/trainer.hpp"

namespace cgdt::eval {

namespace {

EvalReport base_report(const models::DecisionTransformer& policy, const envs::EnvSpec& env, std::size_t n_episodes,
                       const std::vector<std::uint64_t>& seeds, const std::string& policy_id) {
  if (n_episodes == 0) throw std::invalid_argument("evaluation needs at least one episode");
  if (seeds.empty()) throw std::invalid_argument("evaluation needs at least one seed");
  EvalReport r;
  r.env = env;
  r.policy_id = policy_id;
  r.n_episodes = n_episodes;
  r.seeds = seeds;
  r.return_scale = policy.return_scale();
  r.oracle = envs::oracle(env);
  return r;
}

// Rollouts for every seed at one target; appends episode records.
std::vector<double> run_target(const models::DecisionTransformer& policy, const envs::EnvSpec& env, double lambda,
                               double target, EvalReport& report) {
  std::vector<double> all;
  for (auto seed : report.seeds) {
    const auto result = rollout(policy, env, target, report.n_episodes, seed);
    report.negative_rtg_steps += result.negative_rtg_steps;
    for (std::size_t i = 0; i < result.returns.size(); ++i) {
      report.episodes.push_back(EpisodeRecord{seed, i, lambda, target, result.returns[i]});
      all.push_back(result.returns[i]);
    }
  }
  return all;
}

}  // namespace

EvalReport evaluate(const models::DecisionTransformer& policy, const envs::EnvSpec& env, double target_return,
                    std::size_t n_episodes, const std::vector<std::uint64_t>& seeds, const std::string& policy_id) {
  auto r = base_report(policy, env, n_episodes, seeds, policy_id);
  r.target_return = target_return;
  r.overall = summarize(run_target(policy, env, 1.0, target_return, r));
  return r;
}

double consistency_score(const std::vector<LambdaRow>& rows) {
  if (rows.empty()) throw std::invalid_argument("consistency score over an empty grid");
  double total = 0.0;
  for (const auto& row : rows) total += std::abs(row.achieved.mean - row.clamped_target);
  return total / static_cast<double>(rows.size());
}

EvalReport conditional_sweep(const models::DecisionTransformer& policy, const envs::EnvSpec& env,
                             double base_target, const std::vector<double>& lambdas, std::size_t n_episodes,
                             const std::vector<std::uint64_t>& seeds, const std::string& policy_id) {
  if (lambdas.empty()) throw std::invalid_argument("lambda grid is empty");
  for (double l : lambdas) {
    if (!(l >= 0.0 && l <= 2.0)) throw std::invalid_argument("lambda values must lie in [0, 2]");
  }
  auto r = base_report(policy, env, n_episodes, seeds, policy_id);
  r.target_return = base_target;
  std::vector<double> all;
  for (double l : lambdas) {
    LambdaRow row;
    row.lambda = l;
    row.target = l * base_target;
    row.clamped_target = std::min(row.target, r.oracle.max_achievable);
    const auto returns = run_target(policy, env, l, row.target, r);
    row.achieved = summarize(returns);
    all.insert(all.end(), returns.begin(), returns.end());
    r.lambda_table.push_back(row);
  }
  r.overall = summarize(all);
  r.consistency_score = consistency_score(r.lambda_table);
  return r;
}

std::string to_string(AblationParameter p) {
  switch (p) {
    case AblationParameter::TauC:
      return "tau_c";
    case AblationParameter::TauP:
      return "tau_p";
    case AblationParameter::Alpha:
      return "alpha";
  }
  return "unknown";
}

AblationParameter parse_ablation_parameter(const std::string& name) {
  if (name == "tau_c") return AblationParameter::TauC;
  if (name == "tau_p") return AblationParameter::TauP;
  if (name == "alpha") return AblationParameter::Alpha;
  throw std::invalid_argument("unknown ablation parameter '" + name + "'");
}

train::TrainConfig with_parameter(const train::TrainConfig& base, AblationParameter p, double value) {
  auto c = base;
  switch (p) {
    case AblationParameter::TauC:
      c.tau_c = value;
      break;
    case AblationParameter::TauP:
      c.tau_p = value;
      break;
    case AblationParameter::Alpha:
      c.alpha = value;
      break;
  }
  c.validate();
  return c;
}

CellRunner local_cell_runner(const data::Dataset& dataset, const envs::EnvSpec& env, const EvalSettings& settings) {
  return [&dataset, env, settings](const train::TrainConfig& config, bool baseline) {
    auto run = [&] {
      if (baseline) return train::train_dt_baseline(dataset, config);
      const auto critic = train::train_critic(dataset, config);
      return train::train_policy(dataset, critic.critic, config);
    }();
    std::vector<double> returns;
    for (auto seed : settings.eval_seeds) {
      const auto r = rollout(run.policy, env, settings.target_return, settings.n_episodes, seed);
      returns.insert(returns.end(), r.returns.begin(), r.returns.end());
    }
    return returns;
  };
}

EvalReport ablation_grid(const envs::EnvSpec& env, const train::TrainConfig& base, AblationParameter parameter,
                         const std::vector<double>& values, const std::vector<std::uint64_t>& train_seeds,
                         const EvalSettings& settings, const CellRunner& runner) {
  if (values.empty()) throw std::invalid_argument("ablation grid is empty");
  if (train_seeds.empty()) throw std::invalid_argument("ablation grid needs at least one training seed");
  if (settings.n_episodes == 0) throw std::invalid_argument("evaluation needs at least one episode");
  EvalReport r;
  r.env = env;
  r.policy_id = "ablation:" + to_string(parameter);
  r.n_episodes = settings.n_episodes;
  r.seeds = settings.eval_seeds;
  r.target_return = settings.target_return;
  r.oracle = envs::oracle(env);

  std::vector<double> baseline_returns;
  for (auto seed : train_seeds) {
    auto c = base;
    c.seed = seed;
    c.alpha = 0.0;
    const auto returns = runner(c, true);
    baseline_returns.insert(baseline_returns.end(), returns.begin(), returns.end());
  }
  const auto baseline = summarize(baseline_returns);
  r.overall = baseline;

  for (double v : values) {
    std::vector<double> cell_returns;
    for (auto seed : train_seeds) {
      auto c = with_parameter(base, parameter, v);
      c.seed = seed;
      const auto returns = runner(c, false);
      cell_returns.insert(cell_returns.end(), returns.begin(), returns.end());
    }
    AblationCell cell;
    cell.parameter = to_string(parameter);
    cell.value = v;
    cell.seeds = train_seeds;
    cell.cgdt = summarize(cell_returns);
    cell.baseline = baseline;
    cell.delta = cell.cgdt.mean - baseline.mean;
    cell.delta_standard_error = std::hypot(cell.cgdt.standard_error, baseline.standard_error);
    r.ablation.push_back(cell);
  }
  return r;
}

}  // namespace cgdt::eval
