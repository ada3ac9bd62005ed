#include <doctest.h>

#include <cmath>

#include "cgdt/envs/env.hpp"

using namespace cgdt;
using namespace cgdt::envs;

namespace {

double mean_reward(const EnvSpec& spec, const data::Action& a, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += step(spec, reset(spec), a, rng).reward;
  return total / static_cast<double>(n);
}

}  // namespace

TEST_SUITE("envs") {
  TEST_CASE("bandit arm a1 pays 1 - p") {
    const auto spec = EnvSpec::bernoulli_bandit(0.1);
    CHECK(std::abs(mean_reward(spec, data::Action::discrete(0), 1000000, 1) - 0.9) < 0.002);
    CHECK(std::abs(mean_reward(spec, data::Action::discrete(1), 100000, 2) - 0.1) < 3 * std::sqrt(0.09 / 1e5));
  }

  TEST_CASE("bandit with p = 0.5 has equal arms") {
    const auto spec = EnvSpec::bernoulli_bandit(0.5);
    const double se = 3 * std::sqrt(0.25 / 1e5);
    CHECK(std::abs(mean_reward(spec, data::Action::discrete(0), 100000, 3) - 0.5) < se);
    CHECK(std::abs(mean_reward(spec, data::Action::discrete(1), 100000, 4) - 0.5) < se);
    CHECK(oracle(spec).bayes_optimal_value == 0.5);
  }

  TEST_CASE("continuous bandit reward mean and noise") {
    const auto spec = EnvSpec::continuous_bandit();
    for (double a : {-0.8, 0.0, 0.5}) {
      const double sd = 0.1 * (1 + std::abs(a));
      const double m = mean_reward(spec, data::Action::continuous({a}), 100000, 5);
      CHECK(std::abs(m - (1 - a * a)) < 3 * sd / std::sqrt(1e5));
    }
  }

  TEST_CASE("stitch chain fork action B pays exactly 0.4") {
    const auto spec = EnvSpec::stitch_chain();
    Rng rng(6);
    for (int i = 0; i < 100; ++i) {
      auto s = reset(spec);
      double total = 0.0;
      while (!s.done) {
        const auto r = step(spec, s, data::Action::discrete(1), rng);
        total += r.reward;
        s = r.next;
      }
      CHECK(total == 0.4);
    }
  }

  TEST_CASE("stitch chain lucky branch pays 1 with probability 0.1") {
    const auto spec = EnvSpec::stitch_chain();
    Rng rng(7);
    const std::size_t n = 100000;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      auto s = reset(spec);
      while (!s.done) {
        const auto r = step(spec, s, data::Action::discrete(0), rng);
        total += r.reward;
        s = r.next;
      }
    }
    CHECK(std::abs(total / n - 0.1) < 3 * std::sqrt(0.09 / n));
  }

  TEST_CASE("invalid actions and finished episodes are rejected") {
    Rng rng(0);
    const auto bandit = EnvSpec::bernoulli_bandit(0.2);
    CHECK_THROWS_AS(step(bandit, reset(bandit), data::Action::discrete(2), rng), std::invalid_argument);
    CHECK_THROWS_AS(step(bandit, reset(bandit), data::Action::continuous({0.0}), rng), std::invalid_argument);
    const auto cont = EnvSpec::continuous_bandit();
    CHECK_THROWS_AS(step(cont, reset(cont), data::Action::continuous({1.5}), rng), std::invalid_argument);
    auto done = step(bandit, reset(bandit), data::Action::discrete(0), rng).next;
    CHECK_THROWS_AS(step(bandit, done, data::Action::discrete(0), rng), std::invalid_argument);
    CHECK_THROWS_AS(EnvSpec::bernoulli_bandit(0.0), std::invalid_argument);
    CHECK_THROWS_AS(EnvSpec::bernoulli_bandit(1.0), std::invalid_argument);
  }

  TEST_CASE("bandit behavior pulls a1 with probability p") {
    const auto data = generate_dataset(EnvSpec::bernoulli_bandit(0.2), {}, 10000, 11);
    REQUIRE(data.size() == 10000);
    double a1 = 0;
    for (const auto& t : data) {
      CHECK(t.length() == 1);
      CHECK(t.states[0] == std::vector<double>{1.0});
      a1 += t.actions[0].index() == 0;
    }
    CHECK(std::abs(a1 / 10000 - 0.2) < 0.015);
  }

  TEST_CASE("single-sample datasets have one full-length trajectory") {
    for (auto spec : {EnvSpec::bernoulli_bandit(0.3), EnvSpec::continuous_bandit(), EnvSpec::stitch_chain()}) {
      const auto data = generate_dataset(spec, {}, 1, 0);
      REQUIRE(data.size() == 1);
      CHECK(data[0].length() == spec.horizon());
    }
    CHECK_THROWS_AS(generate_dataset(EnvSpec::stitch_chain(), {}, 0, 0), std::invalid_argument);
  }

  TEST_CASE("stitch chain behavior picks fork actions uniformly") {
    const auto data = generate_dataset(EnvSpec::stitch_chain(), {}, 1000, 12);
    double a = 0;
    for (const auto& t : data) {
      REQUIRE(t.length() == 5);
      for (std::size_t i = 0; i + 1 < 5; ++i) CHECK(t.rewards[i] == 0.0);
      a += t.actions.back().index() == 0;
    }
    CHECK(std::abs(a / 1000 - 0.5) < 0.05);
  }

  TEST_CASE("continuous behavior is uniform on the box") {
    const auto data = generate_dataset(EnvSpec::continuous_bandit(), {}, 20000, 13);
    double sum = 0.0;
    double sq = 0.0;
    for (const auto& t : data) {
      const double a = t.actions[0].values()[0];
      CHECK(std::abs(a) <= 1.0);
      sum += a;
      sq += a * a;
    }
    CHECK(std::abs(sum / 20000) < 0.02);
    CHECK(std::abs(sq / 20000 - 1.0 / 3.0) < 0.01);
  }

  TEST_CASE("dataset generation is reproducible") {
    const auto spec = EnvSpec::stitch_chain();
    CHECK(generate_dataset(spec, {}, 200, 5) == generate_dataset(spec, {}, 200, 5));
    CHECK(generate_dataset(spec, {}, 200, 5) != generate_dataset(spec, {}, 200, 6));
  }

  TEST_CASE("bandit oracle") {
    const auto o = oracle(EnvSpec::bernoulli_bandit(0.1));
    CHECK(o.action_values[0] == doctest::Approx(0.9));
    CHECK(o.action_values[1] == doctest::Approx(0.1));
    CHECK(o.bayes_optimal_value == doctest::Approx(0.9));
    CHECK(o.bayes_optimal_action.index() == 0);
    REQUIRE(o.rcsl_posterior_value.has_value());
    CHECK(*o.rcsl_posterior_value == doctest::Approx(0.5));
    for (double p : {0.2, 0.3, 0.4}) {
      const auto op = oracle(EnvSpec::bernoulli_bandit(p));
      CHECK(*op.rcsl_posterior_value == doctest::Approx(0.5));
      CHECK(op.bayes_optimal_value == doctest::Approx(1 - p));
    }
  }

  TEST_CASE("stitch chain oracle") {
    const auto o = oracle(EnvSpec::stitch_chain());
    CHECK(o.bayes_optimal_value == doctest::Approx(0.4));
    CHECK(o.bayes_optimal_action.index() == 1);
    REQUIRE(o.max_return_action_value.has_value());
    CHECK(*o.max_return_action_value == doctest::Approx(0.1));
  }

  TEST_CASE("empirical means match the oracle within three standard errors") {
    const auto spec = EnvSpec::bernoulli_bandit(0.3);
    const auto o = oracle(spec);
    for (int a = 0; a < 2; ++a) {
      const double v = o.action_values[static_cast<std::size_t>(a)];
      const double m = mean_reward(spec, data::Action::discrete(a), 100000, 20 + static_cast<std::uint64_t>(a));
      CHECK(std::abs(m - v) < 3 * std::sqrt(v * (1 - v) / 1e5));
    }
  }

  TEST_CASE("env kinds parse with aliases") {
    CHECK(parse_env_kind("bernoulli") == EnvKind::BernoulliBandit);
    CHECK(parse_env_kind("continuous_bandit") == EnvKind::ContinuousBandit);
    CHECK(parse_env_kind("stitch") == EnvKind::StitchChain);
    CHECK_THROWS_AS(parse_env_kind("mujoco"), std::invalid_argument);
  }
}
