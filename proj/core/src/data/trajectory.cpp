#include "cgdt/data/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cgdt::data {

Action Action::discrete(int index) {
  Action a;
  a.index_ = index;
  return a;
}

Action Action::continuous(std::vector<double> values) {
  Action a;
  a.values_ = std::move(values);
  return a;
}

int Action::index() const {
  if (!index_) throw std::logic_error("continuous action has no index");
  return *index_;
}

const std::vector<double>& Action::values() const {
  if (index_) throw std::logic_error("discrete action has no value vector");
  return values_;
}

ActionSpace ActionSpace::discrete_space(std::size_t n) {
  ActionSpace s;
  s.discrete = true;
  s.n = n;
  return s;
}

ActionSpace ActionSpace::box(std::size_t dim, double low, double high) {
  ActionSpace s;
  s.discrete = false;
  s.n = 0;
  s.dim = dim;
  s.low = low;
  s.high = high;
  return s;
}

bool ActionSpace::contains(const Action& a) const {
  if (discrete) return a.is_discrete() && a.index() >= 0 && static_cast<std::size_t>(a.index()) < n;
  if (a.is_discrete() || a.values().size() != dim) return false;
  return std::all_of(a.values().begin(), a.values().end(),
                     [&](double v) { return std::isfinite(v) && v >= low && v <= high; });
}

void ActionSpace::encode(const Action& a, double* out) const {
  if (discrete) {
    if (!a.is_discrete() || a.index() < 0 || static_cast<std::size_t>(a.index()) >= n) {
      throw std::invalid_argument("action does not belong to a discrete space of size " + std::to_string(n));
    }
    std::fill(out, out + n, 0.0);
    out[a.index()] = 1.0;
    return;
  }
  if (a.is_discrete() || a.values().size() != dim) {
    throw std::invalid_argument("action does not belong to a continuous space of dimension " + std::to_string(dim));
  }
  std::copy(a.values().begin(), a.values().end(), out);
}

std::vector<double> ActionSpace::encode(const Action& a) const {
  std::vector<double> out(encoded_dim());
  encode(a, out.data());
  return out;
}

double Trajectory::total_return() const { return std::accumulate(rewards.begin(), rewards.end(), 0.0); }

void Trajectory::validate() const {
  if (rewards.empty()) throw std::invalid_argument("trajectory is empty");
  if (states.size() != rewards.size() || actions.size() != rewards.size()) {
    throw std::invalid_argument("trajectory has " + std::to_string(states.size()) + " states, " +
                                std::to_string(actions.size()) + " actions and " + std::to_string(rewards.size()) +
                                " rewards");
  }
}

RtgTrajectory compute_rtg(const Trajectory& traj) {
  traj.validate();
  RtgTrajectory out{traj, std::vector<double>(traj.length())};
  double acc = 0.0;
  for (std::size_t t = traj.length(); t-- > 0;) {
    acc = traj.rewards[t] + acc;
    out.rtg[t] = acc;
  }
  return out;
}

std::vector<RtgTrajectory> compute_rtg(const Dataset& dataset) {
  std::vector<RtgTrajectory> out;
  out.reserve(dataset.size());
  for (const auto& t : dataset) out.push_back(compute_rtg(t));
  return out;
}

Trajectory delay_rewards(const Trajectory& traj) {
  traj.validate();
  Trajectory out = traj;
  // Summed back to front so the total matches compute_rtg's R_0 bit for bit.
  double total = 0.0;
  for (std::size_t t = traj.length(); t-- > 0;) total = traj.rewards[t] + total;
  std::fill(out.rewards.begin(), out.rewards.end(), 0.0);
  out.rewards.back() = total;
  return out;
}

Dataset delay_rewards(const Dataset& dataset) {
  Dataset out;
  out.reserve(dataset.size());
  for (const auto& t : dataset) out.push_back(delay_rewards(t));
  return out;
}

Dataset filter_top_return(const Dataset& dataset, double fraction) {
  if (dataset.empty()) throw std::invalid_argument("filter_top_return: empty dataset");
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("filter_top_return: fraction must be in (0, 1], got " + std::to_string(fraction));
  }
  const std::size_t n = dataset.size();
  const auto keep = std::min(n, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9)));
  std::vector<double> returns(n);
  for (std::size_t i = 0; i < n; ++i) returns[i] = compute_rtg(dataset[i]).rtg[0];
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return returns[a] > returns[b]; });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  Dataset out;
  out.reserve(keep);
  for (auto i : order) out.push_back(dataset[i]);
  return out;
}

double return_scale(const Dataset& dataset) {
  double scale = 0.0;
  for (const auto& t : dataset) scale = std::max(scale, std::abs(compute_rtg(t).rtg[0]));
  return scale > 0.0 ? scale : 1.0;
}

}  // namespace cgdt::data
