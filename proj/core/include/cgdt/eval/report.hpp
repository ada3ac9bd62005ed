#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cgdt/envs/env.hpp"

namespace cgdt::eval {

struct Summary {
  double mean = 0.0;
  double standard_error = 0.0;
  std::size_t count = 0;
};

/// Sample mean and sd / sqrt(n). n == 1 gives a zero standard error.
Summary summarize(const std::vector<double>& values);

/// One evaluated episode; `lambda` is 1 outside conditional sweeps.
struct EpisodeRecord {
  std::uint64_t seed = 0;
  std::size_t episode = 0;
  double lambda = 1.0;
  double target = 0.0;
  double total_return = 0.0;
};

struct LambdaRow {
  double lambda = 0.0;
  double target = 0.0;          // lambda * R
  double clamped_target = 0.0;  // min(lambda * R, oracle max)
  Summary achieved;
};

struct AblationCell {
  std::string parameter;
  double value = 0.0;
  std::vector<std::uint64_t> seeds;
  Summary cgdt;
  Summary baseline;
  double delta = 0.0;
  double delta_standard_error = 0.0;
};

struct EvalReport {
  envs::EnvSpec env;
  std::string policy_id;
  std::size_t n_episodes = 0;
  std::vector<std::uint64_t> seeds;
  double return_scale = 1.0;
  std::optional<double> target_return;
  Summary overall;
  std::vector<LambdaRow> lambda_table;
  std::optional<double> consistency_score;
  std::vector<AblationCell> ablation;
  envs::OracleReport oracle;
  std::size_t negative_rtg_steps = 0;
  std::vector<EpisodeRecord> episodes;
};

nlohmann::json to_json(const envs::EnvSpec& spec);
envs::EnvSpec env_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const envs::OracleReport& oracle);
nlohmann::json to_json(const Summary& summary);
nlohmann::json to_json(const EvalReport& report);

/// Header "seed,episode,lambda,target,return", one row per episode.
std::string episodes_csv(const EvalReport& report);

/// Round-trip exact decimal form used in CSV output.
std::string format_double(double value);

}  // namespace cgdt::eval
