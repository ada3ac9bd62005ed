#include "cgdt/train/config.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

#include "cgdt/models/checkpoint.hpp"

namespace cgdt::train {

using nlohmann::json;

ConfigError::ConfigError(std::string key, const std::string& what)
    : std::invalid_argument("config key '" + key + "': " + what), key_(std::move(key)) {}

void TrainConfig::validate() const {
  auto open_unit = [](const char* key, double v) {
    if (!(v > 0.0 && v < 1.0)) throw ConfigError(key, "must lie strictly inside (0, 1), got " + std::to_string(v));
  };
  open_unit("tau_c", tau_c);
  open_unit("tau_p", tau_p);
  open_unit("validation_fraction", validation_fraction);
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha", "must be >= 0");
  if (critic_iterations < 1) throw ConfigError("critic_iterations", "must be >= 1");
  if (policy_iterations < 1) throw ConfigError("policy_iterations", "must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  if (context_length < 1) throw ConfigError("context_length", "must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate", "must be positive");
  if (warmup_steps < 0) throw ConfigError("warmup_steps", "must be >= 0");
  if (grad_clip < 0.0) throw ConfigError("grad_clip", "must be >= 0");
  if (weight_decay < 0.0) throw ConfigError("weight_decay", "must be >= 0");
  if (early_stop_patience < 1) throw ConfigError("early_stop_patience", "must be >= 1");
  if (eval_interval < 1) throw ConfigError("eval_interval", "must be >= 1");
  if (!(critic_data_fraction > 0.0 && critic_data_fraction <= 1.0)) {
    throw ConfigError("critic_data_fraction", "must lie in (0, 1]");
  }
  if (!(sigma_floor > 0.0)) throw ConfigError("sigma_floor", "must be positive");
  if (architecture != "desk" && architecture != "paper") throw ConfigError("architecture", "must be 'desk' or 'paper'");
  try {
    resolved_policy_model().validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("policy_model", e.what());
  }
  try {
    resolved_critic_model().validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("critic_model", e.what());
  }
}

diff::OptimizerConfig TrainConfig::optimizer() const {
  diff::OptimizerConfig o;
  o.learning_rate = learning_rate;
  o.warmup_steps = warmup_steps;
  o.grad_clip = grad_clip;
  o.weight_decay = weight_decay;
  return o;
}

models::TransformerConfig TrainConfig::resolved_policy_model() const {
  auto c = policy_model;
  c.context_length = context_length;
  return c;
}

models::TransformerConfig TrainConfig::resolved_critic_model() const {
  auto c = critic_model;
  c.context_length = context_length;
  return c;
}

json to_json(const TrainConfig& c) {
  json j{{"tau_c", c.tau_c},
         {"tau_p", c.tau_p},
         {"alpha", c.alpha},
         {"critic_iterations", c.critic_iterations},
         {"policy_iterations", c.policy_iterations},
         {"batch_size", c.batch_size},
         {"context_length", c.context_length},
         {"learning_rate", c.learning_rate},
         {"warmup_steps", c.warmup_steps},
         {"grad_clip", c.grad_clip},
         {"weight_decay", c.weight_decay},
         {"seed", c.seed},
         {"early_stop_patience", c.early_stop_patience},
         {"eval_interval", c.eval_interval},
         {"critic_data_fraction", c.critic_data_fraction},
         {"validation_fraction", c.validation_fraction},
         {"critic_indicator_flip", c.critic_indicator_flip},
         {"sigma_floor", c.sigma_floor},
         {"architecture", c.architecture},
         {"policy_model", c.resolved_policy_model()},
         {"critic_model", c.resolved_critic_model()}};
  j["action_space"] = c.action_space ? models::action_space_to_json(*c.action_space) : json(nullptr);
  return j;
}

namespace {

template <class T>
T get_as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(key, "has the wrong type");
  }
}

std::int64_t get_count(const json& v, const std::string& key) {
  if (!v.is_number_integer()) throw ConfigError(key, "must be an integer");
  return v.get<std::int64_t>();
}

std::size_t get_size(const json& v, const std::string& key) {
  const auto n = get_count(v, key);
  if (n < 0) throw ConfigError(key, "must be non-negative");
  return static_cast<std::size_t>(n);
}

}  // namespace

TrainConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("<root>", "config must be a JSON object");
  TrainConfig c;
  if (j.contains("architecture")) {
    c.architecture = get_as<std::string>(j.at("architecture"), "architecture");
    if (c.architecture == "paper") {
      c.policy_model = models::TransformerConfig::paper_policy();
      c.critic_model = models::TransformerConfig::paper_critic();
    } else if (c.architecture != "desk") {
      throw ConfigError("architecture", "must be 'desk' or 'paper'");
    }
  }
  using Setter = std::function<void(const json&)>;
  const std::map<std::string, Setter> setters{
      {"tau_c", [&](const json& v) { c.tau_c = get_as<double>(v, "tau_c"); }},
      {"tau_p", [&](const json& v) { c.tau_p = get_as<double>(v, "tau_p"); }},
      {"alpha", [&](const json& v) { c.alpha = get_as<double>(v, "alpha"); }},
      {"critic_iterations", [&](const json& v) { c.critic_iterations = get_count(v, "critic_iterations"); }},
      {"policy_iterations", [&](const json& v) { c.policy_iterations = get_count(v, "policy_iterations"); }},
      {"batch_size", [&](const json& v) { c.batch_size = get_size(v, "batch_size"); }},
      {"context_length", [&](const json& v) { c.context_length = get_size(v, "context_length"); }},
      {"learning_rate", [&](const json& v) { c.learning_rate = get_as<double>(v, "learning_rate"); }},
      {"warmup_steps", [&](const json& v) { c.warmup_steps = get_count(v, "warmup_steps"); }},
      {"grad_clip", [&](const json& v) { c.grad_clip = get_as<double>(v, "grad_clip"); }},
      {"weight_decay", [&](const json& v) { c.weight_decay = get_as<double>(v, "weight_decay"); }},
      {"seed", [&](const json& v) { c.seed = static_cast<std::uint64_t>(get_size(v, "seed")); }},
      {"early_stop_patience", [&](const json& v) { c.early_stop_patience = get_count(v, "early_stop_patience"); }},
      {"eval_interval", [&](const json& v) { c.eval_interval = get_count(v, "eval_interval"); }},
      {"critic_data_fraction",
       [&](const json& v) { c.critic_data_fraction = get_as<double>(v, "critic_data_fraction"); }},
      {"validation_fraction", [&](const json& v) { c.validation_fraction = get_as<double>(v, "validation_fraction"); }},
      {"critic_indicator_flip",
       [&](const json& v) { c.critic_indicator_flip = get_as<bool>(v, "critic_indicator_flip"); }},
      {"sigma_floor", [&](const json& v) { c.sigma_floor = get_as<double>(v, "sigma_floor"); }},
      {"architecture", [](const json&) {}},
      {"policy_model",
       [&](const json& v) {
         try {
           models::from_json(v, c.policy_model);
         } catch (const std::invalid_argument& e) {
           throw ConfigError("policy_model", e.what());
         }
       }},
      {"critic_model",
       [&](const json& v) {
         try {
           models::from_json(v, c.critic_model);
         } catch (const std::invalid_argument& e) {
           throw ConfigError("critic_model", e.what());
         }
       }},
      {"action_space",
       [&](const json& v) {
         if (v.is_null()) return;
         try {
           c.action_space = models::action_space_from_json(v);
         } catch (const std::exception& e) {
           throw ConfigError("action_space", e.what());
         }
       }},
  };
  for (const auto& [key, value] : j.items()) {
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError(key, "unknown key");
    it->second(value);
  }
  // An explicit K in a model section must agree with the top-level one.
  for (const char* section : {"policy_model", "critic_model"}) {
    if (j.contains(section) && j.at(section).contains("context_length") &&
        j.at(section).at("context_length").get<std::size_t>() != c.context_length) {
      throw ConfigError(section, "context_length disagrees with the top-level context_length");
    }
  }
  c.validate();
  return c;
}

data::ActionSpace infer_action_space(const data::Dataset& dataset) {
  if (dataset.empty()) throw std::invalid_argument("cannot infer an action space from an empty dataset");
  const bool discrete = dataset.front().actions.front().is_discrete();
  if (discrete) {
    int max_index = 0;
    for (const auto& t : dataset) {
      for (const auto& a : t.actions) {
        if (!a.is_discrete() || a.index() < 0) throw std::invalid_argument("dataset mixes action kinds");
        max_index = std::max(max_index, a.index());
      }
    }
    return data::ActionSpace::discrete_space(static_cast<std::size_t>(max_index) + 1);
  }
  const std::size_t dim = dataset.front().actions.front().values().size();
  double low = -1.0;
  double high = 1.0;
  for (const auto& t : dataset) {
    for (const auto& a : t.actions) {
      if (a.is_discrete() || a.values().size() != dim) throw std::invalid_argument("dataset mixes action kinds");
      for (double v : a.values()) {
        low = std::min(low, v);
        high = std::max(high, v);
      }
    }
  }
  return data::ActionSpace::box(dim, low, high);
}

}  // namespace cgdt::train
