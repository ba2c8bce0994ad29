#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "lateralgrad/autograd.hpp"
#include "lateralgrad/errors.hpp"
#include "lateralgrad/model.hpp"
#include "lateralgrad/optim.hpp"
#include "lateralgrad/rng.hpp"
#include "oracle_helpers.hpp"

using namespace lateralgrad;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

Model two_conv_net(Rng& rng, int64_t h = 6, int64_t w = 6) {
  return ModelBuilder(1, h, w)
      .conv2d(2, 3, 1, 1)
      .relu()
      .conv2d(3, 3, 1, 1)
      .relu()
      .maxpool(2)
      .flatten()
      .linear(3)
      .build(rng);
}

}  // namespace

TEST_CASE("conv output shape through a padded 3x3 kernel") {
  Rng rng(1);
  Model m = ModelBuilder(1, 4, 4).conv2d(5, 3, 1, 1).build(rng);
  Tape tape = forward(m, Tensor({1, 1, 4, 4}, 0.5));
  CHECK(tape.output().shape() == std::vector<int64_t>{1, 5, 4, 4});
}

TEST_CASE("identity conv kernel reproduces its input") {
  Rng rng(2);
  Model m = ModelBuilder(1, 5, 5).conv2d(1, 3, 1, 1).build(rng);
  Tensor& w = m.param("conv0.weight");
  w.fill(0.0);
  w(0, 0, 1, 1) = 1.0;
  m.param("conv0.bias").fill(0.0);
  Tensor input = random_tensor({2, 1, 5, 5}, rng);
  Tape tape = forward(m, input);
  CHECK(bitwise_equal(tape.output(), input));
}

TEST_CASE("forward matches the nested-loop oracle") {
  Rng rng(3);
  Model m = ModelBuilder(2, 7, 6)
                .conv2d(3, 3, 1, 1)
                .relu()
                .maxpool(2)
                .conv2d(4, 2, 2, 0)
                .flatten()
                .linear(4)
                .build(rng);
  Tensor input = random_tensor({3, 2, 7, 6}, rng);
  Tape tape = forward(m, input);
  Tensor expect = oracle::model_forward_naive(m, input);
  CHECK(max_abs_diff(tape.output(), expect) <= 1e-12);
}

TEST_CASE("forward rejects mismatched input naming the layer") {
  Rng rng(4);
  Model m = ModelBuilder(3, 8, 8).conv2d(2, 3).build(rng);
  CHECK_THROWS_WITH_AS(forward(m, Tensor({1, 1, 8, 8})), doctest::Contains("layer 0"),
                       ConfigError);
}

TEST_CASE("builder rejects geometry that does not compose") {
  Rng rng(5);
  CHECK_THROWS_AS(ModelBuilder(1, 4, 4).conv2d(2, 7).build(rng), ConfigError);
  CHECK_THROWS_AS(ModelBuilder(1, 4, 4).maxpool(8).build(rng), ConfigError);
}

TEST_CASE("scalar linear chain rule") {
  Rng rng(6);
  Model m = ModelBuilder(1, 1, 1).flatten().linear(1).build(rng);
  m.param("fc0.weight")(0, 0) = 3.0;
  m.param("fc0.bias")(0) = 0.0;
  Tensor x({1, 1, 1, 1});
  x[0] = 2.0;
  Tape tape = forward(m, x);
  CHECK(tape.output()[0] == doctest::Approx(6.0));
  Gradients g = backward(m, tape, Tensor({1, 1}, 1.0));
  CHECK(g.at("fc0.weight")[0] == doctest::Approx(2.0));  // dL/dw = x
  CHECK(g.at("fc0.bias")[0] == doctest::Approx(1.0));
  CHECK(tape.input_grad()[0] == doctest::Approx(3.0));  // dL/dx = w
}

TEST_CASE("backward twice on one tape is a usage error") {
  Rng rng(7);
  Model m = ModelBuilder(1, 2, 2).flatten().linear(2).build(rng);
  Tape tape = forward(m, Tensor({1, 1, 2, 2}, 1.0));
  backward(m, tape, Tensor({1, 2}, 1.0));
  CHECK_THROWS_AS(backward(m, tape, Tensor({1, 2}, 1.0)), UsageError);
}

TEST_CASE("all-ones hook leaves parameter gradients bitwise unchanged") {
  Rng rng(8);
  Model m = two_conv_net(rng);
  Tensor input = random_tensor({2, 1, 6, 6}, rng);
  std::vector<int> labels{0, 2};

  Tape plain = forward(m, input);
  LossResult loss = cross_entropy(plain.output(), labels);
  Gradients g0 = backward(m, plain, loss.grad);

  Tape hooked = forward(m, input);
  hooked.hooks[1] = [](const Tensor& g, int) {
    Tensor out = Tensor::zeros_like(g);
    for (int64_t i = 0; i < g.numel(); ++i) out[i] = g[i] * 1.0;
    return out;
  };
  Gradients g1 = backward(m, hooked, loss.grad);
  for (const auto& [name, t] : g0.by_param) CHECK(bitwise_equal(t, g1.at(name)));
}

TEST_CASE("hook linearity: masked activation gradient equals mask times hookless gradient") {
  Rng rng(9);
  Model m = two_conv_net(rng);
  Tensor input = random_tensor({2, 1, 6, 6}, rng);
  std::vector<int> labels{1, 0};

  Tape plain = forward(m, input);
  LossResult loss = cross_entropy(plain.output(), labels);
  backward(m, plain, loss.grad);
  const Tensor& unmasked = plain.activation_grad(3);  // second conv output

  Tensor mask = Tensor::zeros_like(unmasked);
  for (int64_t i = 0; i < mask.numel(); ++i) mask[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;

  Tape hooked = forward(m, input);
  hooked.hooks[3] = [&mask](const Tensor& g, int) {
    Tensor out = Tensor::zeros_like(g);
    for (int64_t i = 0; i < g.numel(); ++i) out[i] = g[i] * mask[i];
    return out;
  };
  backward(m, hooked, loss.grad);
  const Tensor& masked = hooked.activation_grad(3);
  for (int64_t i = 0; i < masked.numel(); ++i) REQUIRE(masked[i] == unmasked[i] * mask[i]);
}

TEST_CASE("finite differences confirm every parameter gradient of a 2-conv net") {
  Rng rng(10);
  Model m = two_conv_net(rng);
  int64_t n_params = 0;
  for (const auto& [name, t] : m.params) n_params += t.numel();
  CHECK(n_params <= 500);

  Tensor input = random_tensor({2, 1, 6, 6}, rng);
  std::vector<int> labels{2, 1};
  Tape tape = forward(m, input);
  LossResult loss = cross_entropy(tape.output(), labels);
  Gradients g = backward(m, tape, loss.grad);

  auto loss_fn = [&]() {
    Tape t = forward(m, input);
    return cross_entropy(t.output(), labels).loss;
  };
  CHECK(oracle::max_grad_check_error(m, loss_fn, g) <= 1e-4);
}

TEST_CASE("finite differences per op kind") {
  Rng rng(11);
  std::vector<Model> nets;
  nets.push_back(ModelBuilder(2, 5, 5).conv2d(3, 3, 2, 1).flatten().linear(2).build(rng));
  nets.push_back(
      ModelBuilder(1, 6, 6).conv2d(2, 3).relu().maxpool(2, 1).flatten().linear(2).build(rng));
  nets.push_back(ModelBuilder(1, 6, 6).conv2d(2, 3).avgpool(2).flatten().linear(3).build(rng));
  nets.push_back(ModelBuilder(2, 4, 4).flatten().linear(5).relu().linear(2).build(rng));
  for (Model& m : nets) {
    Tensor input = random_tensor({2, m.input_shape[0], m.input_shape[1], m.input_shape[2]}, rng);
    std::vector<int> labels{0, 1};
    Tape tape = forward(m, input);
    LossResult loss = cross_entropy(tape.output(), labels);
    Gradients g = backward(m, tape, loss.grad);
    auto loss_fn = [&]() {
      Tape t = forward(m, input);
      return cross_entropy(t.output(), labels).loss;
    };
    CHECK(oracle::max_grad_check_error(m, loss_fn, g) <= 1e-4);
  }
}

TEST_CASE("per-sample gradients average to the batch gradient") {
  Rng rng(12);
  Model m = two_conv_net(rng);
  Tensor input = random_tensor({4, 1, 6, 6}, rng);
  std::vector<int> labels{0, 1, 2, 0};
  Tape tape = forward(m, input);
  LossResult loss = cross_entropy(tape.output(), labels);
  Tensor seeds = per_sample_loss_seeds(loss, labels);
  std::vector<Gradients> per_sample = per_sample_gradients(m, tape, seeds);

  Gradients batch = backward(m, tape, loss.grad);
  for (const auto& [name, bg] : batch.by_param) {
    Tensor sum = Tensor::zeros_like(bg);
    for (const auto& s : per_sample) sum += s.by_param.at(name);
    sum *= 1.0 / 4.0;  // seeds are per-sample losses; the batch loss is their mean
    CHECK(max_abs_diff(sum, bg) <= 1e-12);
  }
}

TEST_CASE("relu derivative at exactly zero is zero") {
  Rng rng(13);
  Model m = ModelBuilder(1, 1, 1).relu().flatten().linear(1).build(rng);
  m.param("fc0.weight")(0, 0) = 1.0;
  m.param("fc0.bias")(0) = 0.0;
  Tensor x({1, 1, 1, 1});
  x[0] = 0.0;
  Tape tape = forward(m, x);
  backward(m, tape, Tensor({1, 1}, 1.0));
  CHECK(tape.input_grad()[0] == 0.0);
}

TEST_CASE("sgd single step arithmetic") {
  std::map<std::string, Tensor> params;
  params["w"] = Tensor({1}, 1.0);
  Gradients g;
  g.by_param["w"] = Tensor({1}, 2.0);
  SgdOptimizer opt(0.1, 0.0, 0.0);
  opt.step(params, g);
  CHECK(params["w"][0] == doctest::Approx(0.8));
}

TEST_CASE("sgd zero gradient leaves parameters untouched") {
  std::map<std::string, Tensor> params;
  params["w"] = Tensor({3}, 0.7);
  Gradients g;
  g.by_param["w"] = Tensor({3}, 0.0);
  SgdOptimizer opt(0.5, 0.0, 0.0);
  opt.step(params, g);
  for (int64_t i = 0; i < 3; ++i) CHECK(params["w"][i] == 0.7);
}

TEST_CASE("sgd momentum follows the hand velocity recursion") {
  std::map<std::string, Tensor> params;
  params["w"] = Tensor({1}, 1.0);
  SgdOptimizer opt(0.1, 0.9, 0.0);
  Gradients g1, g2;
  g1.by_param["w"] = Tensor({1}, 1.0);
  g2.by_param["w"] = Tensor({1}, 2.0);

  // v1 = 1, w1 = 1 - 0.1*1; v2 = 0.9*1 + 2, w2 = w1 - 0.1*v2
  opt.step(params, g1);
  CHECK(params["w"][0] == doctest::Approx(0.9));
  opt.step(params, g2);
  CHECK(params["w"][0] == doctest::Approx(0.9 - 0.1 * (0.9 + 2.0)));
}

TEST_CASE("sgd rejects non-positive learning rate") {
  CHECK_THROWS_AS(SgdOptimizer(0.0, 0.9, 0.0), ConfigError);
  CHECK_THROWS_AS(SgdOptimizer(-1.0, 0.9, 0.0), ConfigError);
}

TEST_CASE("same seed reproduces outputs, gradients and updates bitwise") {
  auto run = [] {
    Rng rng(99);
    Model m = two_conv_net(rng);
    Tensor input = random_tensor({2, 1, 6, 6}, rng);
    std::vector<int> labels{1, 2};
    Tape tape = forward(m, input);
    LossResult loss = cross_entropy(tape.output(), labels);
    Gradients g = backward(m, tape, loss.grad);
    SgdOptimizer opt(0.05, 0.9, 1e-4);
    opt.step(m.params, g);
    return std::make_pair(m, tape.output());
  };
  auto [m1, out1] = run();
  auto [m2, out2] = run();
  CHECK(bitwise_equal(out1, out2));
  for (const auto& [name, t] : m1.params) CHECK(bitwise_equal(t, m2.param(name)));
}

TEST_CASE("cross entropy gradient rows sum to zero") {
  Rng rng(14);
  Tensor logits = random_tensor({3, 5}, rng, -2.0, 2.0);
  LossResult loss = cross_entropy(logits, {0, 3, 4});
  for (int64_t b = 0; b < 3; ++b) {
    double s = 0.0;
    for (int64_t k = 0; k < 5; ++k) s += loss.grad(b, k);
    CHECK(std::fabs(s) <= 1e-15);
  }
}
