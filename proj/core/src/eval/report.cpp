#include "cgdt/eval/report.hpp"

#include <charconv>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cgdt::eval {

using nlohmann::json;

Summary summarize(const std::vector<double>& values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.standard_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return s;
}

json to_json(const envs::EnvSpec& spec) {
  json j{{"kind", envs::to_string(spec.kind)}};
  switch (spec.kind) {
    case envs::EnvKind::BernoulliBandit:
      j["p"] = spec.p;
      break;
    case envs::EnvKind::ContinuousBandit:
      break;
    case envs::EnvKind::StitchChain:
      j["chain_length"] = spec.chain_length;
      j["lucky_probability"] = spec.lucky_probability;
      j["lucky_reward"] = spec.lucky_reward;
      j["safe_reward"] = spec.safe_reward;
      break;
  }
  return j;
}

envs::EnvSpec env_spec_from_json(const json& j) {
  envs::EnvSpec s;
  s.kind = envs::parse_env_kind(j.at("kind").get<std::string>());
  if (j.contains("p")) s.p = j.at("p").get<double>();
  if (j.contains("chain_length")) s.chain_length = j.at("chain_length").get<std::size_t>();
  if (j.contains("lucky_probability")) s.lucky_probability = j.at("lucky_probability").get<double>();
  if (j.contains("lucky_reward")) s.lucky_reward = j.at("lucky_reward").get<double>();
  if (j.contains("safe_reward")) s.safe_reward = j.at("safe_reward").get<double>();
  s.validate();
  return s;
}

json to_json(const envs::OracleReport& o) {
  json j{{"action_values", o.action_values},
         {"bayes_optimal_value", o.bayes_optimal_value},
         {"min_achievable", o.min_achievable},
         {"max_achievable", o.max_achievable}};
  if (o.bayes_optimal_action.is_discrete()) {
    j["bayes_optimal_action"] = o.bayes_optimal_action.index();
  } else {
    j["bayes_optimal_action"] = o.bayes_optimal_action.values();
  }
  j["rcsl_posterior_value"] = o.rcsl_posterior_value ? json(*o.rcsl_posterior_value) : json(nullptr);
  j["max_return_action_value"] = o.max_return_action_value ? json(*o.max_return_action_value) : json(nullptr);
  return j;
}

json to_json(const Summary& s) {
  return json{{"mean", s.mean}, {"standard_error", s.standard_error}, {"count", s.count}};
}

json to_json(const EvalReport& r) {
  json lambdas = json::array();
  for (const auto& row : r.lambda_table) {
    lambdas.push_back(json{{"lambda", row.lambda},
                           {"target", row.target},
                           {"clamped_target", row.clamped_target},
                           {"achieved", to_json(row.achieved)}});
  }
  json cells = json::array();
  for (const auto& c : r.ablation) {
    cells.push_back(json{{"parameter", c.parameter},
                         {"value", c.value},
                         {"seeds", c.seeds},
                         {"cgdt", to_json(c.cgdt)},
                         {"baseline", to_json(c.baseline)},
                         {"delta", c.delta},
                         {"delta_standard_error", c.delta_standard_error}});
  }
  json returns = json::array();
  for (const auto& e : r.episodes) returns.push_back(e.total_return);
  return json{{"env", to_json(r.env)},
              {"policy", r.policy_id},
              {"n_episodes", r.n_episodes},
              {"seeds", r.seeds},
              {"return_scale", r.return_scale},
              {"target_return", r.target_return ? json(*r.target_return) : json(nullptr)},
              {"summary", to_json(r.overall)},
              {"lambda_table", lambdas},
              {"consistency_score", r.consistency_score ? json(*r.consistency_score) : json(nullptr)},
              {"ablation", cells},
              {"oracle", to_json(r.oracle)},
              {"negative_rtg_steps", r.negative_rtg_steps},
              {"returns", returns}};
}

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  if (res.ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, res.ptr);
}

std::string episodes_csv(const EvalReport& r) {
  std::string out = "seed,episode,lambda,target,return\n";
  for (const auto& e : r.episodes) {
    out += std::to_string(e.seed) + ',' + std::to_string(e.episode) + ',' + format_double(e.lambda) + ',' +
           format_double(e.target) + ',' + format_double(e.total_return) + '\n';
  }
  return out;
}

}  // namespace cgdt::eval
