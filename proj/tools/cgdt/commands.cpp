#include "commands.hpp"

#include <spawn.h>
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "cgdt/data/io.hpp"
#include "cgdt/eval/protocols.hpp"
#include "cgdt/models/checkpoint.hpp"
#include "cgdt/train/trainer.hpp"
#include "version.hpp"

extern char** environ;

namespace cgdt::cli {

using nlohmann::json;

CliError::CliError(std::string kind, const std::string& message, json details)
    : std::runtime_error(message), kind_(std::move(kind)), details_(std::move(details)) {}

json error_json(const std::exception& e) {
  json j{{"error", "runtime_error"}, {"message", e.what()}};
  if (const auto* c = dynamic_cast<const CliError*>(&e)) {
    j["error"] = c->kind();
    for (const auto& [k, v] : c->details().items()) j[k] = v;
  } else if (const auto* c = dynamic_cast<const train::ConfigError*>(&e)) {
    j["error"] = "config_error";
    j["key"] = c->key();
  } else if (const auto* d = dynamic_cast<const data::DatasetParseError*>(&e)) {
    j["error"] = "dataset_parse_error";
    j["line"] = d->line();
  } else if (const auto* t = dynamic_cast<const train::TrainingDiverged*>(&e)) {
    j["error"] = "training_diverged";
    j["phase"] = t->phase();
    j["step"] = t->step();
  } else if (dynamic_cast<const std::invalid_argument*>(&e) != nullptr) {
    j["error"] = "invalid_argument";
  }
  return j;
}

std::string version() { return CGDT_VERSION; }

namespace {

using Clock = std::chrono::steady_clock;

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void require_file(const fs::path& path, const char* what) {
  if (!fs::is_regular_file(path)) {
    throw CliError("missing_file", std::string(what) + " not found: " + path.string(), json{{"path", path.string()}});
  }
}

void prepare_output_file(const fs::path& path, bool force) {
  if (fs::exists(path) && !force) {
    throw CliError("output_exists", "refusing to overwrite " + path.string() + " (pass --force)",
                   json{{"path", path.string()}});
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

void prepare_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_directory(dir)) {
    throw CliError("output_exists", dir.string() + " exists and is not a directory", json{{"path", dir.string()}});
  }
  if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
    throw CliError("output_exists", "refusing to overwrite " + dir.string() + " (pass --force)",
                   json{{"path", dir.string()}});
  }
  fs::create_directories(dir);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CliError("io_error", "cannot write " + path.string(), json{{"path", path.string()}});
  out << text;
  if (!out) throw CliError("io_error", "failed writing " + path.string(), json{{"path", path.string()}});
}

struct Manifest {
  Manifest(std::string cmd, std::vector<std::string> args, std::optional<fs::path> cfg_path = std::nullopt,
           json cfg = nullptr)
      : command(std::move(cmd)), argv(std::move(args)), config_path(std::move(cfg_path)), config(std::move(cfg)) {
    if (config_path) add_input("config", *config_path);
  }

  std::string command;
  std::vector<std::string> argv;
  std::optional<fs::path> config_path;
  json config;
  json inputs = json::array();
  std::vector<fs::path> outputs;
  Clock::time_point start = Clock::now();

  void add_input(const std::string& role, const fs::path& path) {
    inputs.push_back(json{{"role", role}, {"path", path.string()}, {"fnv1a64", file_hash(path)}});
  }

  // Run id depends only on the invocation, so reruns share it.
  void write(const fs::path& path) const {
    std::string key = command;
    for (const auto& a : argv) key += '\x1f' + a;
    key += '\x1e' + config.dump();
    json outs = json::array();
    for (const auto& o : outputs) outs.push_back(o.string());
    outs.push_back(path.string());
    const json j{{"run_id", hex64(fnv1a(key))},
                 {"command", command},
                 {"argv", argv},
                 {"version", version()},
                 {"config_path", config_path ? json(config_path->string()) : json(nullptr)},
                 {"config", config},
                 {"inputs", inputs},
                 {"outputs", outs},
                 {"duration_seconds", std::chrono::duration<double>(Clock::now() - start).count()}};
    models::write_json_file(path, j);
  }
};

train::TrainConfig load_config(const std::optional<fs::path>& path) {
  if (!path) return train::TrainConfig{};
  require_file(*path, "config file");
  json j;
  try {
    j = models::read_json_file(*path);
  } catch (const json::exception& e) {
    throw CliError("config_error", "cannot parse " + path->string() + ": " + e.what(),
                   json{{"path", path->string()}, {"key", "<file>"}});
  }
  return train::config_from_json(j);
}

data::Dataset load_data(const fs::path& path) {
  require_file(path, "dataset");
  return data::load_dataset(path);
}

models::DecisionTransformer load_policy(const fs::path& path) {
  require_file(path, "policy checkpoint");
  const auto j = models::read_json_file(path);
  if (models::checkpoint_kind(j) != "policy") {
    throw CliError("checkpoint_mismatch", path.string() + " is not a policy checkpoint", json{{"path", path.string()}});
  }
  return models::DecisionTransformer::from_json(j);
}

models::GaussianCritic load_critic(const fs::path& path) {
  require_file(path, "critic checkpoint");
  const auto j = models::read_json_file(path);
  if (models::checkpoint_kind(j) != "critic") {
    throw CliError("checkpoint_mismatch", path.string() + " is not a critic checkpoint", json{{"path", path.string()}});
  }
  return models::GaussianCritic::from_json(j);
}

std::size_t episodes_for(const envs::EnvSpec& env, std::int64_t requested) {
  if (requested == 0) throw CliError("invalid_argument", "--episodes must be at least 1");
  if (requested > 0) return static_cast<std::size_t>(requested);
  return env.kind == envs::EnvKind::StitchChain ? 100 : 1000;
}

void write_report(const eval::EvalReport& report, const fs::path& dir, Manifest& manifest) {
  const auto report_path = dir / "report.json";
  const auto csv_path = dir / "episodes.csv";
  models::write_json_file(report_path, eval::to_json(report));
  write_text(csv_path, eval::episodes_csv(report));
  manifest.outputs.push_back(report_path);
  manifest.outputs.push_back(csv_path);
}

std::string policy_id(const fs::path& path) { return path.string() + "#" + file_hash(path); }

void write_policy_run(const train::PolicyRun& run, const fs::path& dir, Manifest& manifest) {
  const auto ckpt = dir / "policy.json";
  const auto record = dir / "run_record.json";
  models::write_json_file(ckpt, run.policy.to_json());
  models::write_json_file(record, train::to_json(run.record));
  manifest.outputs.push_back(ckpt);
  manifest.outputs.push_back(record);
}

int wait_child(pid_t pid) {
  int status = 0;
  while (waitpid(pid, &status, 0) < 0) {
    if (errno != EINTR) throw CliError("subprocess_error", std::strerror(errno));
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
}

pid_t spawn(const fs::path& exe, const std::vector<std::string>& args) {
  std::vector<char*> argv;
  std::vector<std::string> storage{exe.string()};
  storage.insert(storage.end(), args.begin(), args.end());
  for (auto& s : storage) argv.push_back(s.data());
  argv.push_back(nullptr);
  pid_t pid = 0;
  const int rc = posix_spawn(&pid, exe.c_str(), nullptr, nullptr, argv.data(), environ);
  if (rc != 0) throw CliError("subprocess_error", "cannot start " + exe.string() + ": " + std::strerror(rc));
  return pid;
}

std::string join_seeds(const std::vector<std::uint64_t>& seeds) {
  std::string s;
  for (std::size_t i = 0; i < seeds.size(); ++i) s += (i ? "," : "") + std::to_string(seeds[i]);
  return s;
}

std::vector<std::string> env_args(const EnvOptions& env) {
  return {"--env", env.env, "--p", eval::format_double(env.p)};
}

}  // namespace

envs::EnvSpec make_env(const EnvOptions& options) {
  auto spec = envs::EnvSpec{};
  spec.kind = envs::parse_env_kind(options.env);
  spec.p = options.p;
  spec.validate();
  return spec;
}

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliError("missing_file", "cannot read " + path.string(), json{{"path", path.string()}});
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    h = fnv1a(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
  }
  return hex64(h);
}

std::vector<double> parse_grid(const std::string& text) {
  auto number = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || s.empty()) throw CliError("invalid_argument", "bad grid value '" + s + "' in '" + text + "'");
    return v;
  };
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() != 3) throw CliError("invalid_argument", "range grid must be start:step:stop, got '" + text + "'");
    const double start = number(parts[0]);
    const double step = number(parts[1]);
    const double stop = number(parts[2]);
    if (!(step > 0.0) || stop < start) throw CliError("invalid_argument", "empty or unbounded grid '" + text + "'");
    const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9));
    for (std::size_t i = 0; i <= n; ++i) out.push_back(std::round((start + static_cast<double>(i) * step) * 1e12) / 1e12);
  } else {
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ',');) out.push_back(number(p));
  }
  if (out.empty()) throw CliError("invalid_argument", "empty grid");
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ',');) {
    const auto first = p.find_first_not_of(" \t");
    p = first == std::string::npos ? "" : p.substr(first, p.find_last_not_of(" \t") - first + 1);
    if (p.empty() || p.find_first_not_of("0123456789") != std::string::npos) {
      throw CliError("invalid_argument", "bad seed '" + p + "' in '" + text + "'");
    }
    out.push_back(std::stoull(p));
  }
  if (out.empty()) throw CliError("invalid_argument", "no seeds given");
  return out;
}

void gen_data(const GenDataOptions& o, const std::vector<std::string>& argv) {
  if (o.n <= 0) throw CliError("invalid_argument", "--n must be at least 1", json{{"n", o.n}});
  const auto env = make_env(o.env);
  const fs::path manifest_path = o.out.string() + ".manifest.json";
  prepare_output_file(o.out, o.force);
  prepare_output_file(manifest_path, o.force);
  Manifest m{"gen-data", argv};
  m.config = json{{"env", eval::to_json(env)}, {"n", o.n}, {"seed", o.seed}};
  const auto dataset = envs::generate_dataset(env, {}, static_cast<std::size_t>(o.n), o.seed);
  data::save_dataset(dataset, o.out);
  m.outputs.push_back(o.out);
  m.write(manifest_path);
}

void train_critic(const TrainOptions& o, const std::vector<std::string>& argv) {
  const auto config = load_config(o.config);
  const auto dataset = load_data(o.data);
  prepare_output_dir(o.out, o.force);
  Manifest m{"train-critic", argv, o.config, train::to_json(config)};
  m.add_input("data", o.data);
  const auto run = train::train_critic(dataset, config);
  const auto ckpt = o.out / "critic.json";
  const auto record = o.out / "run_record.json";
  models::write_json_file(ckpt, run.critic.to_json());
  models::write_json_file(record, train::to_json(run.record));
  m.outputs = {ckpt, record};
  m.write(o.out / "manifest.json");
}

void train_policy(const TrainOptions& o, const std::vector<std::string>& argv) {
  if (!o.critic) {
    throw CliError("missing_critic", "train-policy needs a critic checkpoint (--critic); use train-dt for the baseline");
  }
  const auto config = load_config(o.config);
  const auto dataset = load_data(o.data);
  const auto critic = load_critic(*o.critic);
  prepare_output_dir(o.out, o.force);
  Manifest m{"train-policy", argv, o.config, train::to_json(config)};
  m.add_input("data", o.data);
  m.add_input("critic", *o.critic);
  const auto run = train::train_policy(dataset, critic, config);
  write_policy_run(run, o.out, m);
  m.write(o.out / "manifest.json");
}

void train_dt(const TrainOptions& o, const std::vector<std::string>& argv) {
  const auto config = load_config(o.config);
  const auto dataset = load_data(o.data);
  prepare_output_dir(o.out, o.force);
  Manifest m{"train-dt", argv, o.config, train::to_json(config)};
  m.add_input("data", o.data);
  const auto run = train::train_dt_baseline(dataset, config);
  write_policy_run(run, o.out, m);
  m.write(o.out / "manifest.json");
}

void eval(const EvalOptions& o, const std::vector<std::string>& argv) {
  const auto env = make_env(o.env);
  const auto episodes = episodes_for(env, o.episodes);
  const auto seeds = parse_seeds(o.seeds);
  const auto policy = load_policy(o.policy);
  prepare_output_dir(o.out, o.force);
  Manifest m{"eval", argv};
  m.config = json{{"env", eval::to_json(env)}, {"target", o.target}, {"episodes", episodes}, {"seeds", seeds}};
  m.add_input("policy", o.policy);
  const auto report = eval::evaluate(policy, env, o.target, episodes, seeds, policy_id(o.policy));
  write_report(report, o.out, m);
  m.write(o.out / "manifest.json");
}

void cell(const CellOptions& o) {
  const auto env = make_env(o.env);
  const auto config = load_config(o.config);
  const auto dataset = load_data(o.data);
  eval::EvalSettings settings;
  settings.target_return = o.target;
  settings.n_episodes = episodes_for(env, o.episodes);
  settings.eval_seeds = parse_seeds(o.seeds);
  const auto returns = eval::local_cell_runner(dataset, env, settings)(config, o.baseline);
  models::write_json_file(o.out, json{{"baseline", o.baseline}, {"config", train::to_json(config)}, {"returns", returns}});
}

void sweep(const SweepOptions& o, const std::vector<std::string>& argv, const fs::path& self_executable) {
  const auto env = make_env(o.env);
  const auto episodes = episodes_for(env, o.episodes);
  const auto seeds = parse_seeds(o.seeds);
  const auto grid = parse_grid(o.grid);
  if (o.jobs < 1) throw CliError("invalid_argument", "--jobs must be at least 1");
  Manifest m{"sweep", argv};

  if (o.kind == "lambda") {
    if (!o.policy) throw CliError("invalid_argument", "a lambda sweep needs --policy");
    const auto policy = load_policy(*o.policy);
    prepare_output_dir(o.out, o.force);
    m.config = json{{"kind", o.kind}, {"env", eval::to_json(env)}, {"base_target", o.target},
                    {"grid", grid},   {"episodes", episodes},        {"seeds", seeds}};
    m.add_input("policy", *o.policy);
    const auto report = eval::conditional_sweep(policy, env, o.target, grid, episodes, seeds, policy_id(*o.policy));
    write_report(report, o.out, m);
    m.write(o.out / "manifest.json");
    return;
  }

  const auto parameter = [&] {
    try {
      return eval::parse_ablation_parameter(o.kind);
    } catch (const std::invalid_argument&) {
      throw CliError("invalid_argument", "--kind must be lambda, tau_c or tau_p, got '" + o.kind + "'");
    }
  }();
  if (!o.data) throw CliError("invalid_argument", "a " + o.kind + " sweep needs --data");
  const auto base = load_config(o.config);
  const auto train_seeds = parse_seeds(o.train_seeds);
  require_file(*o.data, "dataset");
  for (double v : grid) eval::with_parameter(base, parameter, v);
  prepare_output_dir(o.out, o.force);
  m.config = json{{"kind", o.kind},         {"env", eval::to_json(env)},    {"target", o.target},
                  {"grid", grid},           {"episodes", episodes},         {"seeds", seeds},
                  {"train_seeds", train_seeds}, {"base_config", train::to_json(base)}};
  m.config_path = o.config;
  if (o.config) m.add_input("config", *o.config);
  m.add_input("data", *o.data);
  const fs::path data_path = fs::absolute(*o.data);

  eval::EvalSettings settings;
  settings.target_return = o.target;
  settings.n_episodes = episodes;
  settings.eval_seeds = seeds;

  // First pass collects the cells the grid asks for, in order.
  struct Job {
    train::TrainConfig config;
    bool baseline;
  };
  std::vector<Job> jobs;
  eval::ablation_grid(env, base, parameter, grid, train_seeds, settings,
                      [&](const train::TrainConfig& c, bool baseline) {
                        jobs.push_back({c, baseline});
                        return std::vector<double>{};
                      });

  const fs::path cells_dir = o.out / "cells";
  fs::create_directories(cells_dir);
  std::vector<fs::path> results(jobs.size());
  std::vector<std::pair<pid_t, std::size_t>> running;
  auto reap = [&](std::size_t keep) {
    while (running.size() > keep) {
      const auto [pid, index] = running.front();
      running.erase(running.begin());
      const int rc = wait_child(pid);
      if (rc != 0) {
        throw CliError("cell_failed", "sweep cell " + std::to_string(index) + " exited with status " + std::to_string(rc),
                       json{{"cell", index}, {"status", rc}});
      }
    }
  };
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "cell_%03zu", i);
    const fs::path cfg = cells_dir / (std::string(name) + ".config.json");
    results[i] = cells_dir / (std::string(name) + ".json");
    models::write_json_file(cfg, train::to_json(jobs[i].config));
    m.outputs.push_back(cfg);
    m.outputs.push_back(results[i]);
    std::vector<std::string> args{"cell", "--data", data_path.string(), "--config", fs::absolute(cfg).string(),
                                  "--target", eval::format_double(o.target), "--episodes", std::to_string(episodes),
                                  "--seeds", join_seeds(seeds), "--out", fs::absolute(results[i]).string()};
    const auto e = env_args(o.env);
    args.insert(args.end(), e.begin(), e.end());
    if (jobs[i].baseline) args.push_back("--baseline");
    reap(static_cast<std::size_t>(o.jobs) - 1);
    running.emplace_back(spawn(self_executable, args), i);
  }
  reap(0);

  std::size_t next = 0;
  const auto report = eval::ablation_grid(env, base, parameter, grid, train_seeds, settings,
                                          [&](const train::TrainConfig&, bool) {
                                            const auto j = models::read_json_file(results[next++]);
                                            return j.at("returns").get<std::vector<double>>();
                                          });
  write_report(report, o.out, m);
  m.write(o.out / "manifest.json");
}

}  // namespace cgdt::cli
