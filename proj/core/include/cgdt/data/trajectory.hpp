#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cgdt::data {

/// A discrete action index or a continuous action vector.
class Action {
 public:
  static Action discrete(int index);
  static Action continuous(std::vector<double> values);

  bool is_discrete() const { return index_.has_value(); }
  int index() const;
  const std::vector<double>& values() const;

  bool operator==(const Action&) const = default;

 private:
  std::optional<int> index_;
  std::vector<double> values_;
};

struct ActionSpace {
  bool discrete = true;
  std::size_t n = 2;    // number of discrete actions
  std::size_t dim = 1;  // continuous dimension
  double low = -1.0;
  double high = 1.0;

  static ActionSpace discrete_space(std::size_t n);
  static ActionSpace box(std::size_t dim, double low, double high);

  /// Width of the model-side encoding (one-hot for discrete).
  std::size_t encoded_dim() const { return discrete ? n : dim; }
  bool contains(const Action& a) const;
  /// Writes the encoding of `a` into out[0 .. encoded_dim()).
  void encode(const Action& a, double* out) const;
  std::vector<double> encode(const Action& a) const;

  bool operator==(const ActionSpace&) const = default;
};

struct Trajectory {
  std::vector<std::vector<double>> states;
  std::vector<Action> actions;
  std::vector<double> rewards;

  std::size_t length() const { return rewards.size(); }
  double total_return() const;
  /// Throws std::invalid_argument unless all three sequences share a length >= 1.
  void validate() const;

  bool operator==(const Trajectory&) const = default;
};

struct RtgTrajectory {
  Trajectory trajectory;
  std::vector<double> rtg;

  std::size_t length() const { return trajectory.length(); }
};

using Dataset = std::vector<Trajectory>;

/// R_t = r_t + R_{t+1}, accumulated from the end.
RtgTrajectory compute_rtg(const Trajectory& traj);
std::vector<RtgTrajectory> compute_rtg(const Dataset& dataset);

/// All reward moved to the final step: [0, ..., 0, sum(r)].
Trajectory delay_rewards(const Trajectory& traj);
Dataset delay_rewards(const Dataset& dataset);

/// Keeps the ceil(fraction * n) trajectories with the highest total return,
/// ties broken by original index, preserving original order.
Dataset filter_top_return(const Dataset& dataset, double fraction);

/// max |R_0| over the dataset, or 1 if every return is zero. Returns fed to
/// the models are divided by this value.
double return_scale(const Dataset& dataset);

}  // namespace cgdt::data
