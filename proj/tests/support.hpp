#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cgdt/diff/tensor.hpp"

namespace cgdt::testing {

struct GradProbe {
  std::size_t tensor = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps exactly-zero gradients
/// (e.g. attention key biases) from turning 1e-19 roundoff into error 1.
inline double relative_error(double a, double n, double floor = 1e-8) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

/// Compares reverse-mode gradients of `loss` with central differences of step
/// `h` at `n_probes` random entries of `inputs`. `loss` must rebuild the graph
/// from the current input values on every call.
inline std::vector<GradProbe> gradcheck(const std::function<diff::Tensor()>& loss, std::vector<diff::Tensor> inputs,
                                        std::size_t n_probes, std::uint64_t seed, double h = 1e-5) {
  for (auto& t : inputs) t.zero_grad();
  {
    diff::Tape tape;
    diff::Tape::Scope scope(tape);
    tape.backward(loss());
  }
  std::mt19937_64 rng(seed);
  std::vector<std::pair<std::size_t, std::size_t>> slots;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    for (std::size_t i = 0; i < inputs[t].numel(); ++i) slots.emplace_back(t, i);
  }
  std::shuffle(slots.begin(), slots.end(), rng);
  slots.resize(std::min(n_probes, slots.size()));
  std::vector<GradProbe> probes;
  for (auto [t, i] : slots) {
    auto& x = inputs[t].data()[i];
    const double saved = x;
    double plus = 0.0;
    double minus = 0.0;
    {
      diff::NoGradScope no_grad;
      x = saved + h;
      plus = loss().item();
      x = saved - h;
      minus = loss().item();
      x = saved;
    }
    GradProbe p;
    p.tensor = t;
    p.index = i;
    p.analytic = inputs[t].has_grad() ? inputs[t].grad()[i] : 0.0;
    p.numeric = (plus - minus) / (2.0 * h);
    p.relative_error = relative_error(p.analytic, p.numeric);
    probes.push_back(p);
  }
  return probes;
}

/// Adds N(0, scale) noise to every parameter. The default initialisation is
/// so small that many gradients sit near the roundoff floor of a central
/// difference; gradchecks run on a wider random draw instead.
inline void randomize(diff::ParameterSet& params, double scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (auto& t : params.tensors()) {
    for (auto& x : t.data()) x += n(rng);
  }
}

inline double max_relative_error(const std::vector<GradProbe>& probes) {
  double worst = 0.0;
  for (const auto& p : probes) worst = std::max(worst, p.relative_error);
  return worst;
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("cgdt_" + tag + "_" + std::to_string(rd()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace cgdt::testing
