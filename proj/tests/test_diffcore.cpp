#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "cgdt/diff/ops.hpp"
#include "cgdt/diff/optimizer.hpp"
#include "support.hpp"

using namespace cgdt;
using namespace cgdt::diff;
using cgdt::testing::gradcheck;
using cgdt::testing::max_relative_error;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0, bool grad = true) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = n(rng);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

double run_backward(const Tensor& loss) {
  Tape tape;
  Tape::Scope scope(tape);
  tape.backward(loss);
  return loss.item();
}

}  // namespace

TEST_SUITE("diffcore") {
  TEST_CASE("softmax of equal logits is uniform") {
    const auto y = softmax(Tensor::from({2}, {0.0, 0.0}));
    CHECK(y[0] == 0.5);
    CHECK(y[1] == 0.5);
  }

  TEST_CASE("softmax masks -inf entries and zeroes fully masked rows") {
    const double inf = std::numeric_limits<double>::infinity();
    const auto y = softmax(Tensor::from({2, 2}, {0.0, -inf, -inf, -inf}));
    CHECK(y[0] == 1.0);
    CHECK(y[1] == 0.0);
    CHECK(y[2] == 0.0);
    CHECK(y[3] == 0.0);
  }

  TEST_CASE("layer norm of a constant vector is zero before the affine part") {
    const auto y = layer_norm(Tensor::full({1, 4}, 3.0), Tensor::full({4}, 1.0), Tensor::zeros({4}));
    for (double v : y.data()) CHECK(v == 0.0);
  }

  TEST_CASE("matmul matches the hand-computed product") {
    const auto a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    const auto b = Tensor::from({3, 2}, {7, 8, 9, 10, 11, 12});
    const auto c = matmul(a, b);
    REQUIRE(c.shape() == Shape{2, 2});
    CHECK(c.data() == std::vector<double>{58, 64, 139, 154});
  }

  TEST_CASE("shape mismatches report both shapes") {
    const auto a = Tensor::zeros({2, 3});
    const auto b = Tensor::zeros({2, 3});
    try {
      (void)matmul(a, b);
      FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
      const std::string what = e.what();
      CHECK(what.find("[2,3]") != std::string::npos);
    }
    CHECK_THROWS_AS((void)add(Tensor::zeros({2, 3}), Tensor::zeros({2})), ShapeError);
  }

  TEST_CASE("gradient of sum of squares") {
    auto w = Tensor::from({2}, {1.0, 2.0}, true);
    {
      Tape tape;
      Tape::Scope scope(tape);
      tape.backward(sum(square(w)));
    }
    CHECK(w.grad() == std::vector<double>{2.0, 4.0});

    SUBCASE("repeated backward accumulates") {
      Tape tape;
      Tape::Scope scope(tape);
      tape.backward(sum(square(w)));
      CHECK(w.grad() == std::vector<double>{4.0, 8.0});
    }
  }

  TEST_CASE("parameters off the loss path get zero gradient") {
    auto w = Tensor::from({2}, {1.0, 2.0}, true);
    auto p = Tensor::from({2}, {3.0, 4.0}, true);
    Tape tape;
    Tape::Scope scope(tape);
    auto unused = mul(p, p);
    tape.backward(sum(w));
    for (double g : p.grad()) CHECK(g == 0.0);
  }

  TEST_CASE("backward rejects non-scalar losses") {
    auto w = Tensor::from({2}, {1.0, 2.0}, true);
    Tape tape;
    Tape::Scope scope(tape);
    CHECK_THROWS_AS(tape.backward(square(w)), ShapeError);
  }

  TEST_CASE("nothing is recorded without an active tape or without grad inputs") {
    Tape tape;
    auto w = Tensor::from({2}, {1.0, 2.0}, true);
    (void)square(w);
    CHECK(tape.size() == 0);
    Tape::Scope scope(tape);
    (void)square(Tensor::from({2}, {1.0, 2.0}));
    CHECK(tape.size() == 0);
    (void)square(w);
    CHECK(tape.size() == 1);
    {
      NoGradScope no_grad;
      (void)square(w);
    }
    CHECK(tape.size() == 1);
  }

  TEST_CASE("stop_gradient blocks the backward pass") {
    auto w = Tensor::from({1}, {3.0}, true);
    Tape tape;
    Tape::Scope scope(tape);
    tape.backward(sum(mul(w, stop_gradient(w))));
    CHECK(w.grad()[0] == 3.0);
  }

  TEST_CASE("elementwise and unary ops pass gradcheck") {
    std::mt19937_64 rng(7);
    auto a = random_tensor({3, 4}, rng);
    auto b = random_tensor({3, 4}, rng);
    auto row = random_tensor({4}, rng);
    auto pos = Tensor::from({3, 4}, std::vector<double>(12, 0.0), true);
    for (std::size_t i = 0; i < 12; ++i) pos.data()[i] = 0.5 + 0.1 * static_cast<double>(i);
    auto w = random_tensor({3, 4}, rng);

    auto loss = [&] {
      Tensor t = add(mul(a, b), div(sub(a, row), pos));
      t = add(t, mul(exp(mul_scalar(a, 0.3)), tanh(b)));
      t = add(t, mul(log(pos), softplus(b)));
      t = add(t, add_scalar(neg(square(row)), 1.0));
      t = add(t, abs(b));
      t = add(t, relu(a));
      return sum(mul(t, w));
    };
    const auto probes = gradcheck(loss, {a, b, row, pos}, 40, 1);
    CHECK(max_relative_error(probes) < 1e-4);
  }

  TEST_CASE("matmul, reshape, permute and transpose pass gradcheck") {
    std::mt19937_64 rng(8);
    auto a = random_tensor({2, 3, 4}, rng);
    auto b = random_tensor({4, 5}, rng);
    auto c = random_tensor({2, 5, 3}, rng);
    auto w = random_tensor({2, 3, 3}, rng);
    auto loss = [&] {
      Tensor ab = matmul(a, b);                                  // [2,3,5]
      Tensor abc = matmul(ab, c);                                // [2,3,3]
      Tensor t = transpose_last2(abc);                           // [2,3,3]
      Tensor p = permute(reshape(t, {2, 9}), {1, 0});            // [9,2]
      return sum(mul(reshape(p, {2, 3, 3}), w));
    };
    const auto probes = gradcheck(loss, {a, b, c}, 40, 2);
    CHECK(max_relative_error(probes) < 1e-4);
  }

  TEST_CASE("softmax, log_softmax and layer norm pass gradcheck") {
    std::mt19937_64 rng(9);
    auto x = random_tensor({3, 5}, rng);
    auto gamma = random_tensor({5}, rng);
    auto beta = random_tensor({5}, rng);
    auto w = random_tensor({3, 5}, rng);
    auto loss = [&] {
      Tensor t = add(softmax(x), log_softmax(mul_scalar(x, 0.7)));
      t = add(t, layer_norm(x, gamma, beta));
      return sum(mul(t, w));
    };
    const auto probes = gradcheck(loss, {x, gamma, beta}, 40, 3);
    CHECK(max_relative_error(probes) < 1e-4);
  }

  TEST_CASE("masking, indexing and reductions pass gradcheck") {
    std::mt19937_64 rng(10);
    auto scores = random_tensor({1, 2, 3, 3}, rng);
    auto table = random_tensor({4, 3}, rng);
    auto x = random_tensor({2, 3, 4}, rng);
    const std::vector<std::uint8_t> causal{1, 0, 0, 1, 1, 0, 1, 1, 1};
    const std::vector<std::size_t> ids{3, 0, 3, 1};
    const std::vector<std::size_t> rows{5, 0, 2};
    const std::vector<std::size_t> picks{0, 3, 1, 2, 2, 0};
    auto loss = [&] {
      Tensor att = softmax(apply_attention_mask(scores, causal));
      Tensor t = sum(mul(att, att));
      Tensor e = embedding(table, ids);
      t = add(t, mean(square(e)));
      Tensor g = gather_rows(x, rows);
      Tensor s = slice(x, 1, 1, 2);
      Tensor cat = concat_rows({g, reshape(s, {4, 4})});
      t = add(t, sum(mul(cat, cat)));
      t = add(t, sum(select_last(x, picks)));
      t = add(t, sum(square(sum_last(x))));
      return t;
    };
    const auto probes = gradcheck(loss, {scores, table, x}, 40, 4);
    CHECK(max_relative_error(probes) < 1e-4);
  }

  TEST_CASE("dropout is the identity outside training and rescales kept units") {
    std::mt19937_64 rng(3);
    auto x = Tensor::full({1000}, 1.0);
    const auto eval_out = dropout(x, 0.5, false, rng);
    CHECK(eval_out.data() == x.data());
    const auto train_out = dropout(x, 0.5, true, rng);
    std::size_t kept = 0;
    for (double v : train_out.data()) {
      CHECK((v == 0.0 || v == 2.0));
      kept += v != 0.0;
    }
    CHECK(kept > 400);
    CHECK(kept < 600);
  }

  TEST_CASE("tape replays each op once in reverse order") {
    auto w = Tensor::from({1}, {2.0}, true);
    Tape tape;
    Tape::Scope scope(tape);
    auto y = square(w);
    auto z = exp(y);
    auto loss = sum(z);
    REQUIRE(tape.size() == 3);
    CHECK(std::string(tape.op_name(0)) == "square");
    CHECK(std::string(tape.op_name(2)) == "sum");
    tape.backward(loss);
    CHECK(w.grad()[0] == doctest::Approx(4.0 * std::exp(4.0)));
  }

  TEST_CASE("optimizer clips the global gradient norm") {
    ParameterSet params;
    params.add("a", Tensor::zeros({2}));
    params.add("b", Tensor::zeros({2}));
    params.tensors()[0].mutable_grad() = {0.6, 0.0};
    params.tensors()[1].mutable_grad() = {0.0, 0.8};
    const double norm = clip_global_norm(params, 0.25);
    CHECK(norm == doctest::Approx(1.0));
    CHECK(params.tensors()[0].grad()[0] == doctest::Approx(0.15));
    CHECK(params.tensors()[1].grad()[1] == doctest::Approx(0.2));
  }

  TEST_CASE("zero gradients and zero weight decay leave parameters unchanged") {
    ParameterSet params;
    params.add("w", Tensor::from({3}, {1.0, -2.0, 3.0}));
    OptimizerConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW opt(params, cfg);
    params.zero_grad();
    params.tensors()[0].mutable_grad();
    opt.step();
    CHECK(params.tensors()[0].data() == std::vector<double>{1.0, -2.0, 3.0});
    CHECK(opt.step_count() == 1);
  }

  TEST_CASE("linear warmup reaches half the base rate halfway") {
    ParameterSet params;
    params.add("w", Tensor::zeros({1}));
    OptimizerConfig cfg;
    cfg.learning_rate = 1e-4;
    cfg.warmup_steps = 10000;
    AdamW opt(params, cfg);
    CHECK(opt.learning_rate_at(5000) == doctest::Approx(0.5e-4).epsilon(1e-15));
    CHECK(opt.learning_rate_at(10000) == 1e-4);
    CHECK(opt.learning_rate_at(20000) == 1e-4);
  }

  TEST_CASE("non-finite gradients abort with step and parameter name") {
    ParameterSet params;
    params.add("ok", Tensor::zeros({1}));
    params.add("bad", Tensor::zeros({1}));
    AdamW opt(params, {});
    params.tensors()[0].mutable_grad()[0] = 1.0;
    params.tensors()[1].mutable_grad()[0] = std::numeric_limits<double>::quiet_NaN();
    try {
      opt.step();
      FAIL("expected NonFiniteGradient");
    } catch (const NonFiniteGradient& e) {
      CHECK(e.step() == 1);
      CHECK(e.parameter() == "bad");
    }
    CHECK(params.tensors()[0].data()[0] == 0.0);
  }

  TEST_CASE("identical seeds give bit-identical parameter trajectories") {
    auto run = [] {
      std::mt19937_64 rng(42);
      ParameterSet params;
      auto w = params.add("w", random_tensor({4, 3}, rng, 0.5, false));
      auto x = random_tensor({8, 4}, rng, 1.0, false);
      AdamW opt(params, {1e-2, 10, 0.25, 1e-3});
      std::mt19937_64 drop(5);
      for (int i = 0; i < 120; ++i) {
        params.zero_grad();
        run_backward(sum(square(dropout(matmul(x, w), 0.1, true, drop))));
        opt.step();
      }
      return params.snapshot();
    };
    CHECK(run() == run());
  }

  TEST_CASE("parameter snapshots restore exactly") {
    ParameterSet params;
    params.add("w", Tensor::from({2}, {1.0, 2.0}));
    const auto snap = params.snapshot();
    params.tensors()[0].data()[0] = 9.0;
    params.restore(snap);
    CHECK(params.tensors()[0].data()[0] == 1.0);
    CHECK(params.count() == 2);
  }
}
