#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cgdt/common/random.hpp"
#include "cgdt/data/trajectory.hpp"

namespace cgdt::data {

/// A contiguous window [start, start + length) of one trajectory, to be
/// left-padded up to the context length.
struct Subsequence {
  std::size_t trajectory = 0;
  std::size_t start = 0;
  std::size_t length = 0;

  bool operator==(const Subsequence&) const = default;
};

/// Picks a trajectory with probability proportional to its length, then a
/// uniform start index, then up to K steps truncated at the trajectory end.
std::vector<Subsequence> sample_batch(const std::vector<RtgTrajectory>& dataset, std::size_t batch_size,
                                      std::size_t context_length, Rng& rng);

/// Every window that ends at some step t of some trajectory, covering
/// [max(0, t-K+1), t]. Used for deterministic validation passes.
std::vector<Subsequence> all_windows(const std::vector<RtgTrajectory>& dataset, std::size_t context_length);

/// Dense, left-padded model inputs for a list of windows. Index (b, k) lives at
/// b * K + k. Padded slots are zero and have mask 0.
struct Batch {
  std::size_t batch_size = 0;
  std::size_t context_length = 0;
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::vector<double> states;               // [B, K, state_dim]
  std::vector<double> actions;              // [B, K, action_dim], encoded
  std::vector<std::size_t> action_indices;  // [B, K], discrete spaces only
  std::vector<double> rtg;                  // [B, K], divided by the return scale
  std::vector<double> rewards;              // [B, K], raw
  std::vector<std::size_t> timesteps;       // [B, K], step index within the episode
  std::vector<std::uint8_t> mask;           // [B, K], 1 for real steps

  std::size_t valid_count() const;
};

Batch collate(const std::vector<RtgTrajectory>& dataset, std::span<const Subsequence> windows,
              std::size_t context_length, const ActionSpace& space, double return_scale);

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  double fraction = 0.9;
};

/// Seeded shuffle, then the first round(fraction * n) ids go to training.
/// With n >= 2 both sides get at least one trajectory.
DatasetSplit split(std::size_t n, double fraction, std::uint64_t seed);

template <class T>
std::vector<T> select(const std::vector<T>& items, std::span<const std::size_t> ids) {
  std::vector<T> out;
  out.reserve(ids.size());
  for (auto i : ids) out.push_back(items.at(i));
  return out;
}

}  // namespace cgdt::data
