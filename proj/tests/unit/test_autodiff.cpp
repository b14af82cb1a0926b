#include <doctest.h>

#include <cmath>
#include <limits>

#include "support/gradcheck.hpp"
#include "transcoder/autodiff/adam.hpp"
#include "transcoder/autodiff/ops.hpp"

using namespace transcoder;
using testing::Tape;
using testing::Tensor;

TEST_CASE("every op matches central differences in double precision") {
  for (const auto& op : testing::op_cases()) {
    SUBCASE(op.name.c_str()) {
      for (std::uint64_t point = 0; point < 10; ++point) {
        auto rng = util::Rng::stream(100 + point, op.name);
        const auto inputs = op.inputs(rng);
        const auto r = testing::check_gradients(inputs, op.loss, 16, rng);
        INFO(op.name << " point " << point << " worst " << r.worst);
        CHECK(r.max_rel_error < 1e-4);
      }
    }
  }
}

TEST_CASE("full model loss matches central differences") {
  SUBCASE("with prefix encoder") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const auto r = testing::check_model_gradients(seed, 4);
      INFO("seed " << seed << " worst " << r.worst);
      CHECK(r.max_rel_error < 1e-4);
    }
  }
  SUBCASE("backbone only") {
    const auto r = testing::check_model_gradients(7, 4, false);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("tape is single use") {
  Tape tape;
  const auto x = Tensor::from({2}, {1.0, 2.0}, true);
  const auto loss = ad::sum(tape, ad::mul(tape, x, x));
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(4.0));
  CHECK(tape.consumed());
  CHECK_THROWS_AS(tape.backward(loss), StateError);
  CHECK_THROWS_AS(ad::sum(tape, x), StateError);
}

TEST_CASE("backward needs a scalar that depends on a parameter") {
  Tape tape;
  const auto x = Tensor::from({2}, {1.0, 2.0}, true);
  CHECK_THROWS_AS(tape.backward(ad::scale(tape, x, 2.0)), ShapeError);
  Tape other;
  const auto c = Tensor::from({2}, {1.0, 2.0}, false);
  CHECK_THROWS_AS(other.backward(ad::sum(other, c)), StateError);
}

TEST_CASE("gradients accumulate when a tensor is used twice") {
  Tape tape;
  const auto x = Tensor::from({1}, {3.0}, true);
  const auto y = ad::add(tape, x, x);
  tape.backward(ad::sum(tape, ad::mul(tape, y, x)));  // 2x^2
  CHECK(x.grad()[0] == doctest::Approx(12.0));
}

TEST_CASE("shape mismatches are rejected") {
  Tape tape;
  const auto a = Tensor::zeros({2, 3});
  const auto b = Tensor::zeros({2, 3});
  CHECK_THROWS_AS(ad::matmul(tape, a, b), ShapeError);
  CHECK_THROWS_AS(ad::add(tape, a, Tensor::zeros({3, 2})), ShapeError);
  CHECK_THROWS_AS(ad::add_bias(tape, a, Tensor::zeros({2})), ShapeError);
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
}

TEST_CASE("non-finite results raise NumericError") {
  Tape tape;
  const auto x = Tensor::from({1}, {std::numeric_limits<double>::infinity()}, true);
  CHECK_THROWS_AS(ad::scale(tape, x, 2.0), NumericError);
  const auto big = Tensor::from({1}, {1e200}, true);
  CHECK_THROWS_AS(ad::mul(tape, big, big), NumericError);
}

TEST_CASE("layer_norm rejects a non-positive epsilon") {
  Tape tape;
  const auto x = Tensor::zeros({2, 3});
  CHECK_THROWS_AS(ad::layer_norm(tape, x, Tensor::zeros({3}), Tensor::zeros({3}), 0.0), ConfigError);
}

TEST_CASE("softmax is stable for large scores and masked positions get zero weight") {
  Tape tape(false);
  const auto x = Tensor::from({1, 3}, {1000.0, 1001.0, 0.0});
  const std::uint8_t mask[] = {0, 0, 1};
  const auto masked = ad::add_mask(tape, ad::reshape(tape, x, {1, 1, 3}), mask, 1);
  const auto p = ad::softmax(tape, masked, 2);
  CHECK(p.data()[2] == 0.0);
  CHECK(p.data()[0] + p.data()[1] == doctest::Approx(1.0));
}

TEST_CASE("cross_entropy ignores padding") {
  Tape tape(false);
  const auto logits = Tensor::from({2, 2}, {0.0, 0.0, 5.0, -5.0});
  const std::int32_t with_pad[] = {1, 0};
  const auto loss = ad::cross_entropy(tape, logits, with_pad, 0);
  CHECK(loss.item() == doctest::Approx(std::log(2.0)));
}

TEST_CASE("dropout with rate zero is the identity") {
  Tape tape;
  auto rng = util::Rng::stream(1, "d");
  const auto x = Tensor::from({3}, {1.0, 2.0, 3.0}, true);
  CHECK(ad::dropout(tape, x, 0.0, rng).node() == x.node());
}

TEST_CASE("adam moves a parameter against its gradient") {
  ad::Adam<double> opt({0.1});
  const auto w = Tensor::from({1}, {1.0}, true);
  opt.add_parameter(w);
  CHECK_THROWS_AS(opt.add_parameter(w), StateError);
  for (int i = 0; i < 50; ++i) {
    Tape tape;
    tape.backward(ad::sum(tape, ad::mul(tape, w, w)));
    opt.step();
  }
  CHECK(std::abs(w.data()[0]) < 0.5);
  CHECK_THROWS_AS(ad::Adam<double>({0.0}), ConfigError);
}
