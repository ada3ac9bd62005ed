#pragma once

#include <cstdint>
#include <span>

#include "cgdt/diff/tensor.hpp"

namespace cgdt::train {

// Indicator conventions: I(u > 0) and I(u < 0) are both 0 at u == 0.

/// |tau_c - I(u > 0)|, or |tau_c - I(u < 0)| when `flip` is set.
double asymmetric_critic_weight(double u, double tau_c, bool flip = false);

/// |tau_c - I(u > 0)| * gaussian_nll(mu, sigma, R) with u = (R - mu) / sigma.
double asymmetric_critic_loss(double mean, double stddev, double target, double tau_c, bool flip = false);

/// |tau_p - I(u < 0)| * u^2.
double expectile_loss(double u, double tau_p);

/// expectile_loss((R - mu) / sigma, tau_p).
double expectile_guidance_loss(double mean, double stddev, double target, double tau_p);

/// Elementwise tensor forms. The asymmetry weight is evaluated on detached
/// values, so gradients flow only through the NLL term; the expectile loss is
/// differentiated through u, i.e. through both mu and sigma.
diff::Tensor asymmetric_critic_loss(const diff::Tensor& mean, const diff::Tensor& stddev, const diff::Tensor& target,
                                    double tau_c, bool flip = false);
diff::Tensor expectile_guidance_loss(const diff::Tensor& mean, const diff::Tensor& stddev,
                                     const diff::Tensor& target, double tau_p);

/// Mean over entries whose mask flag is 1. Throws if nothing is unmasked.
diff::Tensor masked_mean(const diff::Tensor& values, std::span<const std::uint8_t> mask);

}  // namespace cgdt::train
