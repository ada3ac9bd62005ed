#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cgdt/diff/tensor.hpp"

namespace cgdt::diff {

struct OptimizerConfig {
  double learning_rate = 1e-4;
  std::int64_t warmup_steps = 10000;
  double grad_clip = 0.25;  // global L2 norm; <= 0 disables clipping
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  NonFiniteGradient(std::int64_t step, std::string parameter);
  std::int64_t step() const { return step_; }
  const std::string& parameter() const { return parameter_; }

 private:
  std::int64_t step_;
  std::string parameter_;
};

/// Adam with decoupled weight decay, linear learning-rate warmup and global
/// gradient-norm clipping. Stands in for LAMB; at the batch sizes used here the
/// layer-wise trust ratio is not needed.
class AdamW {
 public:
  AdamW(ParameterSet& params, OptimizerConfig config);

  /// Applies one update from the gradients currently stored on the
  /// parameters. Throws NonFiniteGradient before touching any parameter.
  void step();

  /// base_lr * min(1, step / warmup_steps) for the given 1-based step.
  double learning_rate_at(std::int64_t step) const;

  std::int64_t step_count() const { return step_; }
  /// Global gradient norm seen by the most recent step, before clipping.
  double last_grad_norm() const { return last_grad_norm_; }
  const OptimizerConfig& config() const { return config_; }

 private:
  ParameterSet* params_;
  OptimizerConfig config_;
  std::vector<std::vector<double>> first_moment_;
  std::vector<std::vector<double>> second_moment_;
  std::int64_t step_ = 0;
  double last_grad_norm_ = 0.0;
};

/// Scales every gradient in place so that the global L2 norm is at most
/// `max_norm`. Returns the norm before scaling.
double clip_global_norm(ParameterSet& params, double max_norm);

}  // namespace cgdt::diff
