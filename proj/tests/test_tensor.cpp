#include <doctest.h>

#include <cmath>
#include <random>

#include "snnhash/gradcheck.hpp"
#include "snnhash/ops.hpp"
#include "snnhash/optim.hpp"
#include "snnhash/primitive.hpp"
#include "snnhash/serialize.hpp"
#include "test_util.hpp"

using namespace snnhash;
using testutil::randn;
using testutil::vec;

namespace {

// Gradient check of sum(op(inputs) * R) with a fixed random readout R, over
// every input.
template <typename F>
double check_op(F op, const std::vector<Shape>& shapes, std::mt19937_64& rng, bool positive = false) {
  std::vector<TensorD> inputs;
  for (const auto& s : shapes) {
    inputs.push_back(positive ? testutil::uniform<double>(s, rng, 0.5, 2.0) : randn<double>(s, rng));
  }
  TensorD probe;
  {
    NoGradGuard ng;
    probe = op(inputs);
  }
  auto readout = randn<double>(probe.shape(), rng);
  auto report = check_gradients<double>(
      [&] { return ops::sum_all(ops::hadamard_multiply(op(inputs), readout)); }, inputs, 1e-6);
  return report.max_rel_error;
}

}  // namespace

TEST_CASE("catalog worked examples") {
  Tensor mask({3}, {1, 0, 1});
  Tensor w({3}, {0.5f, 0.7f, -0.2f});
  CHECK(vec(ops::hadamard_multiply(mask, w)) == std::vector<float>{0.5f, 0.0f, -0.2f});

  auto m = ops::matmul(Tensor::full({2, 3}, 1.0f), Tensor::full({3, 2}, 1.0f));
  CHECK(m.shape() == Shape{2, 2});
  for (float v : m.data()) CHECK(v == 3.0f);

  auto c = ops::conv2d(Tensor::full({1, 4, 4, 1}, 1.0f), Tensor::full({1, 3, 3, 1}, 1.0f), 1);
  CHECK(c.shape() == Shape{1, 4, 4, 1});
  auto cv = c.data();
  CHECK(cv[0] == 4.0f);
  CHECK(cv[3] == 4.0f);
  CHECK(cv[15] == 4.0f);
  CHECK(cv[5] == 9.0f);
  CHECK(cv[10] == 9.0f);
  CHECK(cv[1] == 6.0f);
}

TEST_CASE("backward worked examples") {
  Tensor x({2}, {2, 3}, true);
  backward(ops::sum_all(ops::hadamard_multiply(x, x)));
  CHECK(vec(Tensor({2}, std::vector<float>(x.grad().begin(), x.grad().end()))) == std::vector<float>{4, 6});

  std::mt19937_64 rng(1);
  auto A = randn({2, 3}, rng, 1.0, true);
  auto B = randn({3, 4}, rng);
  backward(ops::sum_all(ops::matmul(A, B)));
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 3; ++k) {
      float rowsum = 0;
      for (int j = 0; j < 4; ++j) rowsum += B.data()[static_cast<std::size_t>(k * 4 + j)];
      CHECK(A.grad()[static_cast<std::size_t>(i * 3 + k)] == doctest::Approx(rowsum).epsilon(1e-6));
    }

  Tensor z({1}, {0.0f}, true);
  backward(ops::sum_all(ops::sigmoid(z)));
  CHECK(z.grad()[0] == doctest::Approx(0.25));
}

TEST_CASE("backward errors") {
  Tensor x({2}, {1, 2}, true);
  CHECK_THROWS_AS(backward(ops::scalar_scale(x, 2.0)), GraphError);
  Tensor y({1}, {1});
  CHECK_THROWS_AS(backward(y), GraphError);
}

TEST_CASE("primitive errors name the op and extents") {
  Tensor a({2, 3}, std::vector<float>(6, 1));
  Tensor b({4, 2}, std::vector<float>(8, 1));
  try {
    ops::matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2,3]") != std::string::npos);
  }
  CHECK_THROWS_AS(ops::add(a, b), ShapeError);
  CHECK_THROWS_AS(ops::log(Tensor({2}, {1.0f, 0.0f})), DomainError);
  CHECK_THROWS_AS(apply_primitive("softmax", {a}), UnknownOpError);
  CHECK_THROWS_AS(ops::reshape(a, {4, 2}), ShapeError);
  CHECK_THROWS_AS(ops::grouped_contraction(Tensor::zeros({2, 5}), Tensor::zeros({2, 2, 2})), ShapeError);
}

TEST_CASE("apply_primitive dispatches the catalog") {
  Tensor a({2, 2}, {1, 2, 3, 4});
  CHECK(vec(apply_primitive("scalar_scale", {a}, {{"factor", 2.0}})) == std::vector<float>{2, 4, 6, 8});
  CHECK(apply_primitive("reshape", {a}, {{"shape", {4}}}).shape() == Shape{4});
  CHECK(vec(apply_primitive("permute_axes", {a}, {{"perm", {1, 0}}})) == std::vector<float>{1, 3, 2, 4});
  CHECK(vec(apply_primitive("sum", {a}, {{"axes", {0}}})) == std::vector<float>{4, 6});
  CHECK(vec(apply_primitive("slice", {a}, {{"axis", 1}, {"start", 1}, {"length", 1}})) ==
        std::vector<float>{2, 4});
  CHECK(vec(apply_primitive("heaviside_with_surrogate", {a}, {{"v_th", 2.0}})) ==
        std::vector<float>{0, 1, 1, 1});
  CHECK(primitive_catalog().size() == 21);
  CHECK_THROWS_AS(apply_primitive("slice", {a}, {{"axis", 1}}), std::invalid_argument);
}

TEST_CASE("smooth primitives match central differences") {
  std::mt19937_64 rng(7);
  using V = std::vector<TensorD>;
  for (int rep = 0; rep < 5; ++rep) {
    CHECK(check_op([](const V& in) { return ops::add(in[0], in[1]); }, {{3, 4}, {4}}, rng) < 1e-4);
    CHECK(check_op([](const V& in) { return ops::subtract(in[0], in[1]); }, {{2, 1, 3}, {4, 1}}, rng) < 1e-4);
    CHECK(check_op([](const V& in) { return ops::hadamard_multiply(in[0], in[1]); }, {{3, 4}, {3, 1}}, rng) <
          1e-4);
    CHECK(check_op([](const V& in) { return ops::scalar_scale(in[0], -1.5); }, {{5}}, rng) < 1e-4);
    CHECK(check_op([](const V& in) { return ops::matmul(in[0], in[1]); }, {{2, 3, 4}, {2, 4, 5}}, rng) < 1e-4);
    CHECK(check_op([](const V& in) { return ops::linear(in[0], in[1], in[2]); }, {{2, 3, 4}, {5, 4}, {5}}, rng) <
          1e-4);
    CHECK(check_op([](const V& in) { return ops::conv2d(in[0], in[1], 1); }, {{2, 5, 4, 3}, {2, 3, 3, 3}}, rng) <
          1e-4);
    CHECK(check_op([](const V& in) { return ops::conv2d(in[0], in[1], 0); }, {{1, 3, 3, 2}, {3, 1, 1, 2}}, rng) <
          1e-4);
    CHECK(check_op([](const V& in) { return ops::maxpool2d(in[0]); }, {{2, 5, 6, 2}}, rng) < 1e-4);
    CHECK(check_op(
              [](const V& in) {
                auto rm = TensorD::zeros({3});
                auto rv = TensorD::full({3}, 1.0);
                return ops::batchnorm(in[0], in[1], in[2], rm, rv, {});
              },
              {{4, 2, 3}, {3}, {3}}, rng) < 1e-4);
    CHECK(check_op([](const V& in) { return ops::reshape(in[0], {3, -1}); }, {{2, 3, 2}}, rng) < 1e-4);
    CHECK(check_op([](const V& in) { return ops::permute_axes(in[0], {2, 0, 1}); }, {{2, 3, 4}}, rng) < 1e-4);
    CHECK(check_op([](const V& in) { return ops::concat(V{in[0], in[1]}, 1); }, {{2, 3}, {2, 2}}, rng) < 1e-4);
    CHECK(check_op([](const V& in) { return ops::slice(in[0], 1, 1, 2); }, {{2, 4, 3}}, rng) < 1e-4);
    CHECK(check_op([](const V& in) { return ops::sum(in[0], {0, 2}); }, {{2, 3, 4}}, rng) < 1e-4);
    CHECK(check_op([](const V& in) { return ops::mean(in[0], {1}, true); }, {{2, 3, 4}}, rng) < 1e-4);
    CHECK(check_op([](const V& in) { return ops::sigmoid(in[0]); }, {{6}}, rng) < 1e-4);
    CHECK(check_op([](const V& in) { return ops::tanh(in[0]); }, {{6}}, rng) < 1e-4);
    CHECK(check_op([](const V& in) { return ops::log(in[0]); }, {{6}}, rng, true) < 1e-4);
    CHECK(check_op([](const V& in) { return ops::exp(in[0]); }, {{6}}, rng) < 1e-4);
    CHECK(check_op([](const V& in) { return ops::grouped_contraction(in[0], in[1]); }, {{2, 3, 6}, {2, 3, 3}},
                   rng) < 1e-4);
    CHECK(check_op(
              [](const V& in) {
                ops::SurrogateForwardGuard sg;
                return ops::heaviside_with_surrogate(in[0], {});
              },
              {{6}}, rng) < 1e-4);
  }
}

TEST_CASE("check_gradients reports") {
  std::mt19937_64 rng(3);
  auto Q = randn<double>({4, 4}, rng);
  auto quad = [&](const TensorD& x) {
    auto x2 = ops::reshape(x, {4, 1});
    return ops::sum_all(ops::hadamard_multiply(x2, ops::matmul(Q, x2)));
  };
  CHECK(check_gradients<double>(quad, randn<double>({4}, rng), 1e-3).max_rel_error < 1e-4);

  auto w = randn<double>({5}, rng);
  auto lin = [&](const TensorD& x) { return ops::sum_all(ops::hadamard_multiply(x, w)); };
  CHECK(check_gradients<double>(lin, randn<double>({5}, rng), 1e-3).max_rel_error < 1e-6);

  auto g = randn<double>({3}, rng), b = randn<double>({3}, rng), r = randn<double>({6, 3}, rng);
  auto bn = [&](const TensorD& x) {
    auto rm = TensorD::zeros({3});
    auto rv = TensorD::full({3}, 1.0);
    return ops::sum_all(ops::hadamard_multiply(ops::batchnorm(x, g, b, rm, rv, {}), r));
  };
  CHECK(check_gradients<double>(bn, randn<double>({6, 3}, rng), 1e-3).max_rel_error < 1e-3);

  CHECK_THROWS_AS(check_gradients<double>([](const TensorD& x) { return ops::scalar_scale(x, 1.0); },
                                          randn<double>({3}, rng), 1e-3),
                  ShapeError);
}

TEST_CASE("fan-out accumulates exactly") {
  std::mt19937_64 rng(11);
  auto x0 = randn({4}, rng);
  auto f = [](const Tensor& x) { return ops::sum_all(ops::hadamard_multiply(x, x)); };
  auto g = [](const Tensor& x) { return ops::sum_all(ops::sigmoid(x)); };
  auto grad_of = [&](auto fn) {
    Tensor x = x0.detach();
    x.set_requires_grad(true);
    backward(fn(x));
    return std::vector<float>(x.grad().begin(), x.grad().end());
  };
  auto gf = grad_of(f);
  auto gg = grad_of(g);
  auto both = grad_of([&](const Tensor& x) { return ops::add(f(x), g(x)); });
  for (std::size_t i = 0; i < both.size(); ++i) CHECK(both[i] == gf[i] + gg[i]);
}

TEST_CASE("permute and reshape round trips are bitwise") {
  std::mt19937_64 rng(5);
  auto x = randn({2, 3, 4, 5}, rng);
  auto p = ops::permute_axes(ops::permute_axes(x, {3, 1, 0, 2}), {2, 1, 3, 0});
  CHECK(vec(p) == vec(x));
  CHECK(p.shape() == x.shape());
  auto r = ops::reshape(ops::reshape(x, {6, -1}), x.shape());
  CHECK(vec(r) == vec(x));
}

TEST_CASE("batchnorm eval is affine and train updates running stats") {
  std::mt19937_64 rng(9);
  auto g = randn({3}, rng), b = randn({3}, rng);
  auto rm = randn({3}, rng);
  auto rv = testutil::uniform({3}, rng, 0.5, 2.0);
  ops::BatchNormOptions eval{false};
  auto x = randn({5, 3}, rng);
  auto y0 = ops::batchnorm(x, g, b, rm, rv, eval);
  auto y1 = ops::batchnorm(ops::add(ops::scalar_scale(x, 2.0), Tensor::scalar(1.0f)), g, b, rm, rv, eval);
  auto c = ops::batchnorm(Tensor::zeros({1, 3}), g, b, rm, rv, eval);
  auto c1 = ops::batchnorm(Tensor::full({1, 3}, 1.0f), g, b, rm, rv, eval);
  // eval(ax + 1) = a (eval(x) - eval(0)) + eval(1)
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 3; ++j) {
      const auto k = static_cast<std::size_t>(i * 3 + j);
      const float expect = 2.0f * (y0.data()[k] - c.data()[static_cast<std::size_t>(j)]) + c1.data()[static_cast<std::size_t>(j)];
      CHECK(y1.data()[k] == doctest::Approx(expect).epsilon(1e-5));
    }

  auto m = Tensor::zeros({1});
  auto v = Tensor::full({1}, 1.0f);
  ops::batchnorm(Tensor({4, 1}, {1, 2, 3, 4}), Tensor::full({1}, 1.0f), Tensor::zeros({1}), m, v, {});
  CHECK(m.data()[0] == doctest::Approx(0.25));
  CHECK(v.data()[0] == doctest::Approx(0.9 + 0.1 * (5.0 / 3.0)));
}

TEST_CASE("optimizer step") {
  std::vector<Param> params{{"w", Tensor({3}, {1.0f, -2.0f, 0.5f}, true)}};
  LrSchedule sched;
  sched.kind = LrSchedule::Kind::kConstant;
  sched.base_lr = 0.1;
  AdamWConfig cfg;
  cfg.weight_decay = 0.1;

  auto st = make_optimizer_state(params, sched);
  params[0].value.mutable_grad();  // zero gradient
  optimizer_step(params, cfg, st);
  CHECK(st.step == 1);
  CHECK(params[0].value.data()[0] == doctest::Approx(1.0 - 0.1 * 0.1 * 1.0));
  CHECK(params[0].value.data()[1] == doctest::Approx(-2.0 + 0.1 * 0.1 * 2.0));

  // constant gradient: per-step move approaches -lr * sign(g)
  std::vector<Param> p2{{"w", Tensor({2}, {0.0f, 0.0f}, true)}};
  cfg.weight_decay = 0.0;
  auto st2 = make_optimizer_state(p2, sched);
  float prev0 = 0, prev1 = 0;
  for (int s = 0; s < 200; ++s) {
    auto g = p2[0].value.mutable_grad();
    g[0] = 3.0f;
    g[1] = -0.01f;
    prev0 = p2[0].value.data()[0];
    prev1 = p2[0].value.data()[1];
    optimizer_step(p2, cfg, st2);
    p2[0].value.zero_grad();
  }
  CHECK(p2[0].value.data()[0] - prev0 == doctest::Approx(-0.1).epsilon(1e-4));
  CHECK(p2[0].value.data()[1] - prev1 == doctest::Approx(0.1).epsilon(1e-3));

  // lr = 0 leaves parameters, advances state
  sched.base_lr = 0.0;
  std::vector<Param> p3{{"w", Tensor({2}, {1.0f, 2.0f}, true)}};
  auto st3 = make_optimizer_state(p3, sched);
  p3[0].value.mutable_grad()[0] = 1.0f;
  optimizer_step(p3, cfg, st3);
  CHECK(vec(p3[0].value) == std::vector<float>{1.0f, 2.0f});
  CHECK(st3.step == 1);
  CHECK(st3.m[0][0] != 0.0f);

  p3[0].value.mutable_grad()[1] = std::nanf("");
  CHECK_THROWS_AS(optimizer_step(p3, cfg, st3), DomainError);
  CHECK(st3.step == 1);
}

TEST_CASE("cosine schedule endpoints") {
  LrSchedule s;
  s.base_lr = 1.0;
  s.min_lr = 0.1;
  s.total_steps = 10;
  CHECK(s.at(0) == doctest::Approx(1.0));
  CHECK(s.at(10) == doctest::Approx(0.1));
  CHECK(s.at(5) == doctest::Approx(0.55));
}

TEST_CASE("tensor serialization round trip") {
  std::mt19937_64 rng(2);
  NamedTensors ts{{"a", randn({2, 3}, rng)}, {"b", randn({4}, rng)}};
  std::string blob;
  auto index = pack_tensors(ts, blob);
  CHECK(blob.size() == 40);
  CHECK(index[1]["byte_offset"] == 24);
  CHECK(index[0]["dtype"] == "float32");
  auto back = unpack_tensors(index, blob);
  CHECK(back[0].first == "a");
  CHECK(vec(back[0].second) == vec(ts[0].second));
  CHECK(back[1].second.shape() == Shape{4});
  // little-endian layout of 1.0f
  std::string one;
  append_floats(one, std::vector<float>{1.0f});
  CHECK(one == std::string("\x00\x00\x80\x3f", 4));
  CHECK_THROWS_AS(read_floats(one, 0, 2), FormatError);
}
