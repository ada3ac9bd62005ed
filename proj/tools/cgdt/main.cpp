#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"

namespace {

using namespace cgdt::cli;

void add_env_flags(CLI::App* cmd, EnvOptions& env, bool required = true) {
  auto* opt = cmd->add_option("--env", env.env, "bernoulli_bandit | continuous_bandit | stitch_chain");
  if (required) opt->required();
  cmd->add_option("--p", env.p, "Bernoulli bandit parameter p")->capture_default_str();
}

void print_error(const nlohmann::json& j) { std::cerr << j.dump() << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  CLI::App app{"Critic-guided decision transformer toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version());

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate an offline dataset from a scripted behavior policy");
  add_env_flags(gen_cmd, gen.env);
  gen_cmd->add_option("--n", gen.n, "Number of episodes")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed)->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output JSON Lines file")->required();
  gen_cmd->add_flag("--force", gen.force, "Overwrite existing outputs");

  TrainOptions critic_opts;
  auto* critic_cmd = app.add_subcommand("train-critic", "Train the asymmetric Gaussian critic");
  critic_cmd->add_option("--data", critic_opts.data)->required();
  critic_cmd->add_option("--config", critic_opts.config, "JSON training config");
  critic_cmd->add_option("--out", critic_opts.out, "Output directory")->required();
  critic_cmd->add_flag("--force", critic_opts.force);

  TrainOptions policy_opts;
  auto* policy_cmd = app.add_subcommand("train-policy", "Train a critic-guided policy");
  policy_cmd->add_option("--data", policy_opts.data)->required();
  policy_cmd->add_option("--critic", policy_opts.critic, "Critic checkpoint");
  policy_cmd->add_option("--config", policy_opts.config);
  policy_cmd->add_option("--out", policy_opts.out)->required();
  policy_cmd->add_flag("--force", policy_opts.force);

  TrainOptions dt_opts;
  auto* dt_cmd = app.add_subcommand("train-dt", "Train the return-conditioned baseline");
  dt_cmd->add_option("--data", dt_opts.data)->required();
  dt_cmd->add_option("--config", dt_opts.config);
  dt_cmd->add_option("--out", dt_opts.out)->required();
  dt_cmd->add_flag("--force", dt_opts.force);

  EvalOptions eval_opts;
  auto* eval_cmd = app.add_subcommand("eval", "Roll out a policy checkpoint");
  eval_cmd->add_option("--policy", eval_opts.policy)->required();
  add_env_flags(eval_cmd, eval_opts.env);
  eval_cmd->add_option("--target", eval_opts.target, "Target return (raw units)")->capture_default_str();
  eval_cmd->add_option("--episodes", eval_opts.episodes, "Episodes per seed (default 1000 bandits, 100 otherwise)");
  eval_cmd->add_option("--seeds", eval_opts.seeds, "Comma-separated evaluation seeds")->capture_default_str();
  eval_cmd->add_option("--out", eval_opts.out)->required();
  eval_cmd->add_flag("--force", eval_opts.force);

  SweepOptions sweep_opts;
  auto* sweep_cmd = app.add_subcommand("sweep", "Conditional-behavior or ablation sweep");
  sweep_cmd->add_option("--kind", sweep_opts.kind, "lambda | tau_c | tau_p")->required();
  sweep_cmd->add_option("--grid", sweep_opts.grid, "start:step:stop or v1,v2,...")->required();
  add_env_flags(sweep_cmd, sweep_opts.env);
  sweep_cmd->add_option("--target", sweep_opts.target, "Base target return")->capture_default_str();
  sweep_cmd->add_option("--episodes", sweep_opts.episodes);
  sweep_cmd->add_option("--seeds", sweep_opts.seeds)->capture_default_str();
  sweep_cmd->add_option("--policy", sweep_opts.policy, "Policy checkpoint (lambda)");
  sweep_cmd->add_option("--data", sweep_opts.data, "Dataset (tau_c, tau_p)");
  sweep_cmd->add_option("--config", sweep_opts.config, "Base training config (tau_c, tau_p)");
  sweep_cmd->add_option("--train-seeds", sweep_opts.train_seeds)->capture_default_str();
  sweep_cmd->add_option("--jobs", sweep_opts.jobs, "Parallel worker processes")->capture_default_str();
  sweep_cmd->add_option("--out", sweep_opts.out)->required();
  sweep_cmd->add_flag("--force", sweep_opts.force);

  CellOptions cell_opts;
  auto* cell_cmd = app.add_subcommand("cell", "");
  cell_cmd->group("");
  cell_cmd->add_option("--data", cell_opts.data)->required();
  cell_cmd->add_option("--config", cell_opts.config)->required();
  add_env_flags(cell_cmd, cell_opts.env);
  cell_cmd->add_flag("--baseline", cell_opts.baseline);
  cell_cmd->add_option("--target", cell_opts.target);
  cell_cmd->add_option("--episodes", cell_opts.episodes);
  cell_cmd->add_option("--seeds", cell_opts.seeds);
  cell_cmd->add_option("--out", cell_opts.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error({{"error", "usage_error"}, {"message", e.what()}});
    return 2;
  }

  try {
    if (*gen_cmd) gen_data(gen, args);
    if (*critic_cmd) train_critic(critic_opts, args);
    if (*policy_cmd) train_policy(policy_opts, args);
    if (*dt_cmd) train_dt(dt_opts, args);
    if (*eval_cmd) eval(eval_opts, args);
    if (*sweep_cmd) sweep(sweep_opts, args, "/proc/self/exe");
    if (*cell_cmd) cell(cell_opts);
  } catch (const std::exception& e) {
    print_error(error_json(e));
    return 1;
  }
  return 0;
}
