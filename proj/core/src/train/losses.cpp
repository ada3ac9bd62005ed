#include "cgdt/train/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "cgdt/diff/ops.hpp"
#include "cgdt/models/critic.hpp"

namespace cgdt::train {

using diff::Tensor;

double asymmetric_critic_weight(double u, double tau_c, bool flip) {
  const double indicator = flip ? (u < 0.0 ? 1.0 : 0.0) : (u > 0.0 ? 1.0 : 0.0);
  return std::abs(tau_c - indicator);
}

double asymmetric_critic_loss(double mean, double stddev, double target, double tau_c, bool flip) {
  const double nll = models::gaussian_nll(mean, stddev, target);
  return asymmetric_critic_weight((target - mean) / stddev, tau_c, flip) * nll;
}

double expectile_loss(double u, double tau_p) {
  const double indicator = u < 0.0 ? 1.0 : 0.0;
  return std::abs(tau_p - indicator) * u * u;
}

double expectile_guidance_loss(double mean, double stddev, double target, double tau_p) {
  if (!(stddev > 0.0)) throw std::invalid_argument("expectile_guidance_loss: sigma must be positive");
  return expectile_loss((target - mean) / stddev, tau_p);
}

Tensor asymmetric_critic_loss(const Tensor& mean, const Tensor& stddev, const Tensor& target, double tau_c,
                              bool flip) {
  if (mean.shape() != stddev.shape() || mean.shape() != target.shape()) {
    throw diff::ShapeError("asymmetric_critic_loss: shapes " + diff::to_string(mean.shape()) + ", " +
                           diff::to_string(stddev.shape()) + ", " + diff::to_string(target.shape()));
  }
  std::vector<double> weights(mean.numel());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double u = (target[i] - mean[i]) / stddev[i];
    weights[i] = asymmetric_critic_weight(u, tau_c, flip);
  }
  return diff::mul(Tensor::from(mean.shape(), std::move(weights)), models::gaussian_nll(mean, stddev, target));
}

Tensor expectile_guidance_loss(const Tensor& mean, const Tensor& stddev, const Tensor& target, double tau_p) {
  if (mean.shape() != stddev.shape() || mean.shape() != target.shape()) {
    throw diff::ShapeError("expectile_guidance_loss: shapes " + diff::to_string(mean.shape()) + ", " +
                           diff::to_string(stddev.shape()) + ", " + diff::to_string(target.shape()));
  }
  Tensor u = diff::div(diff::sub(target, mean), stddev);
  std::vector<double> weights(u.numel());
  for (std::size_t i = 0; i < weights.size(); ++i) weights[i] = std::abs(tau_p - (u[i] < 0.0 ? 1.0 : 0.0));
  return diff::mul(Tensor::from(u.shape(), std::move(weights)), diff::square(u));
}

Tensor masked_mean(const Tensor& values, std::span<const std::uint8_t> mask) {
  if (mask.size() != values.numel()) {
    throw diff::ShapeError("masked_mean: " + std::to_string(mask.size()) + " mask entries for " +
                           diff::to_string(values.shape()));
  }
  std::vector<double> w(mask.size());
  std::size_t count = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    w[i] = mask[i] ? 1.0 : 0.0;
    count += mask[i] ? 1 : 0;
  }
  if (count == 0) throw std::invalid_argument("masked_mean: every position is masked");
  return diff::mul_scalar(diff::sum(diff::mul(values, Tensor::from(values.shape(), std::move(w)))),
                          1.0 / static_cast<double>(count));
}

}  // namespace cgdt::train
