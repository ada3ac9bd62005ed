#include "cgdt/data/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cgdt::data {

std::vector<Subsequence> sample_batch(const std::vector<RtgTrajectory>& dataset, std::size_t batch_size,
                                      std::size_t context_length, Rng& rng) {
  if (dataset.empty()) throw std::invalid_argument("sample_batch: empty dataset");
  if (context_length == 0) throw std::invalid_argument("sample_batch: context length must be >= 1");
  std::vector<double> weights(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) weights[i] = static_cast<double>(dataset[i].length());
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  std::vector<Subsequence> out(batch_size);
  for (auto& s : out) {
    s.trajectory = pick(rng);
    const std::size_t len = dataset[s.trajectory].length();
    s.start = std::uniform_int_distribution<std::size_t>(0, len - 1)(rng);
    s.length = std::min(context_length, len - s.start);
  }
  return out;
}

std::vector<Subsequence> all_windows(const std::vector<RtgTrajectory>& dataset, std::size_t context_length) {
  if (context_length == 0) throw std::invalid_argument("all_windows: context length must be >= 1");
  std::vector<Subsequence> out;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (std::size_t t = 0; t < dataset[i].length(); ++t) {
      const std::size_t start = t + 1 >= context_length ? t + 1 - context_length : 0;
      out.push_back({i, start, t + 1 - start});
    }
  }
  return out;
}

std::size_t Batch::valid_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

Batch collate(const std::vector<RtgTrajectory>& dataset, std::span<const Subsequence> windows,
              std::size_t context_length, const ActionSpace& space, double return_scale) {
  if (dataset.empty()) throw std::invalid_argument("collate: empty dataset");
  Batch b;
  b.batch_size = windows.size();
  b.context_length = context_length;
  b.state_dim = dataset.front().trajectory.states.front().size();
  b.action_dim = space.encoded_dim();
  const std::size_t slots = b.batch_size * context_length;
  b.states.assign(slots * b.state_dim, 0.0);
  b.actions.assign(slots * b.action_dim, 0.0);
  b.action_indices.assign(slots, 0);
  b.rtg.assign(slots, 0.0);
  b.rewards.assign(slots, 0.0);
  b.timesteps.assign(slots, 0);
  b.mask.assign(slots, 0);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto& w = windows[i];
    if (w.length == 0 || w.length > context_length) {
      throw std::invalid_argument("collate: window length " + std::to_string(w.length) + " exceeds context length " +
                                  std::to_string(context_length));
    }
    const auto& rt = dataset.at(w.trajectory);
    if (w.start + w.length > rt.length()) throw std::out_of_range("collate: window runs past trajectory end");
    const std::size_t pad = context_length - w.length;
    for (std::size_t k = 0; k < w.length; ++k) {
      const std::size_t t = w.start + k;
      const std::size_t slot = i * context_length + pad + k;
      const auto& s = rt.trajectory.states[t];
      if (s.size() != b.state_dim) throw std::invalid_argument("collate: inconsistent state dimension");
      std::copy(s.begin(), s.end(), b.states.begin() + static_cast<long>(slot * b.state_dim));
      space.encode(rt.trajectory.actions[t], b.actions.data() + slot * b.action_dim);
      if (space.discrete) b.action_indices[slot] = static_cast<std::size_t>(rt.trajectory.actions[t].index());
      b.rtg[slot] = rt.rtg[t] / return_scale;
      b.rewards[slot] = rt.trajectory.rewards[t];
      b.timesteps[slot] = t;
      b.mask[slot] = 1;
    }
  }
  return b;
}

DatasetSplit split(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("split: fraction must be in (0, 1), got " + std::to_string(fraction));
  }
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng = make_rng(seed, 0x5911);
  std::shuffle(ids.begin(), ids.end(), rng);
  auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (n >= 2) n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  n_train = std::min(n_train, n);
  DatasetSplit out;
  out.fraction = fraction;
  out.train.assign(ids.begin(), ids.begin() + static_cast<long>(n_train));
  out.validation.assign(ids.begin() + static_cast<long>(n_train), ids.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.validation.begin(), out.validation.end());
  return out;
}

}  // namespace cgdt::data
