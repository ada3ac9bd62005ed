#include "cgdt/diff/optimizer.hpp"

#include <algorithm>
#include <cmath>

namespace cgdt::diff {

NonFiniteGradient::NonFiniteGradient(std::int64_t step, std::string parameter)
    : std::runtime_error("non-finite gradient at step " + std::to_string(step) + " in parameter '" + parameter + "'"),
      step_(step),
      parameter_(std::move(parameter)) {}

double clip_global_norm(ParameterSet& params, double max_norm) {
  double sq = 0.0;
  for (const auto& t : params.tensors()) {
    for (double g : t.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& t : params.tensors()) {
      if (!t.has_grad()) continue;
      for (auto& g : t.mutable_grad()) g *= scale;
    }
  }
  return norm;
}

AdamW::AdamW(ParameterSet& params, OptimizerConfig config) : params_(&params), config_(config) {
  if (config_.learning_rate <= 0.0) throw std::invalid_argument("learning rate must be positive");
  if (config_.warmup_steps < 0) throw std::invalid_argument("warmup steps must be non-negative");
  for (const auto& t : params.tensors()) {
    first_moment_.emplace_back(t.numel(), 0.0);
    second_moment_.emplace_back(t.numel(), 0.0);
  }
}

double AdamW::learning_rate_at(std::int64_t step) const {
  if (config_.warmup_steps == 0) return config_.learning_rate;
  const double frac = static_cast<double>(step) / static_cast<double>(config_.warmup_steps);
  return config_.learning_rate * std::min(1.0, frac);
}

void AdamW::step() {
  auto& tensors = params_->tensors();
  for (const auto& t : tensors) {
    for (double g : t.grad()) {
      if (!std::isfinite(g)) throw NonFiniteGradient(step_ + 1, t.name());
    }
  }
  last_grad_norm_ = clip_global_norm(*params_, config_.grad_clip);
  ++step_;
  const double lr = learning_rate_at(step_);
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& w = tensors[i].data();
    const auto& g = tensors[i].grad();
    auto& m = first_moment_[i];
    auto& v = second_moment_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g.empty() ? 0.0 : g[j];
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * gj;
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * gj * gj;
      const double update = (m[j] / bc1) / (std::sqrt(v[j] / bc2) + config_.epsilon);
      w[j] -= lr * (update + config_.weight_decay * w[j]);
    }
  }
}

}  // namespace cgdt::diff
