#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cgdt/envs/env.hpp"

namespace cgdt::cli {

namespace fs = std::filesystem;

/// Failure reported to the user as a JSON object on stderr.
class CliError : public std::runtime_error {
 public:
  CliError(std::string kind, const std::string& message, nlohmann::json details = nlohmann::json::object());
  const std::string& kind() const { return kind_; }
  const nlohmann::json& details() const { return details_; }

 private:
  std::string kind_;
  nlohmann::json details_;
};

/// JSON error object for any exception thrown by a command.
nlohmann::json error_json(const std::exception& e);

struct EnvOptions {
  std::string env;
  double p = 0.1;
};
envs::EnvSpec make_env(const EnvOptions& options);

struct GenDataOptions {
  EnvOptions env;
  std::int64_t n = 10000;
  std::uint64_t seed = 0;
  fs::path out;
  bool force = false;
};

struct TrainOptions {
  fs::path data;
  std::optional<fs::path> config;
  std::optional<fs::path> critic;  // train-policy only
  fs::path out;
  bool force = false;
};

struct EvalOptions {
  fs::path policy;
  EnvOptions env;
  double target = 1.0;
  std::int64_t episodes = -1;  // < 0: 1000 for bandits, 100 otherwise
  std::string seeds = "0,1,2,3,4";
  fs::path out;
  bool force = false;
};

struct SweepOptions {
  std::string kind;  // lambda | tau_c | tau_p
  std::string grid;
  EnvOptions env;
  double target = 1.0;
  std::int64_t episodes = -1;
  std::string seeds = "0,1,2,3,4";
  // lambda sweeps
  std::optional<fs::path> policy;
  // tau sweeps
  std::optional<fs::path> data;
  std::optional<fs::path> config;
  std::string train_seeds = "0";
  std::int64_t jobs = 1;
  fs::path out;
  bool force = false;
};

/// One ablation cell, run in a child process by `sweep`.
struct CellOptions {
  fs::path data;
  fs::path config;
  EnvOptions env;
  bool baseline = false;
  double target = 1.0;
  std::int64_t episodes = 1000;
  std::string seeds = "0";
  fs::path out;
};

/// `argv` is recorded in the manifest.
void gen_data(const GenDataOptions& options, const std::vector<std::string>& argv);
void train_critic(const TrainOptions& options, const std::vector<std::string>& argv);
void train_policy(const TrainOptions& options, const std::vector<std::string>& argv);
void train_dt(const TrainOptions& options, const std::vector<std::string>& argv);
void eval(const EvalOptions& options, const std::vector<std::string>& argv);
void sweep(const SweepOptions& options, const std::vector<std::string>& argv, const fs::path& self_executable);
void cell(const CellOptions& options);

/// "a:step:b" (inclusive) or "v1,v2,...".
std::vector<double> parse_grid(const std::string& text);
std::vector<std::uint64_t> parse_seeds(const std::string& text);

/// FNV-1a 64 of the file contents, as 16 hex digits.
std::string file_hash(const fs::path& path);

std::string version();

}  // namespace cgdt::cli
