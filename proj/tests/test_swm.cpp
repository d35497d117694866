#include <doctest.h>

#include <cmath>
#include <random>

#include "snnhash/gradcheck.hpp"
#include "snnhash/swm.hpp"
#include "test_util.hpp"

using namespace snnhash;
using testutil::vec;

namespace {

Tensor reverse_time(const Tensor& x) {
  std::vector<Tensor> parts;
  for (std::int64_t t = x.shape()[0] - 1; t >= 0; --t) parts.push_back(ops::slice(x, 0, t, 1));
  return ops::concat(parts, 0);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(double(a.data()[i]) - b.data()[i]));
  return m;
}

// LIF with gamma=1, v_th=1 turns an input of exactly 1 or 0 into the same spike
RunContext passthrough() {
  RunContext ctx;
  ctx.lif.gamma = 1.0;
  ctx.stateless_neurons = true;
  return ctx;
}

}  // namespace

TEST_CASE("global mixer examples") {
  auto ctx = passthrough();
  Tensor w({3}, {0.5f, 0.7f, -0.2f});
  CHECK(vec(global_mixer(Tensor({1, 3}, {1, 0, 1}), Tensor({1, 3}, {0.5f, 0.7f, -0.2f}), ctx, "g")) ==
        std::vector<float>{0.5f, 0.0f, -0.2f});
  CHECK(vec(global_mixer(Tensor({1, 3}, {1, 0, 1}), Tensor::full({1, 3}, 1.0f), ctx, "g")) ==
        std::vector<float>{1, 0, 1});
  RunContext normal;
  auto out = global_mixer(Tensor::full({4, 3}, 0.5f), Tensor({1, 3}, {9, 9, 9}), normal, "g");
  for (float v : out.data()) CHECK(v == 0.0f);  // never reaches threshold
}

TEST_CASE("token mixer broadcasts over channels") {
  auto ctx = passthrough();
  // [T'=1, bands=1, B=1, H'=1, W'=2, C=2]
  Tensor bands({1, 1, 1, 1, 2, 2}, {1, 1, 1, 0});
  Tensor w({1, 1, 1, 1, 2, 1}, {0.3f, -2.0f});
  CHECK(vec(token_mixer(bands, w, ctx, "t")) == std::vector<float>{0.3f, 0.3f, -2.0f, 0.0f});
  auto zero = token_mixer(bands, Tensor::zeros({1, 1, 1, 1, 2, 1}), ctx, "t");
  for (float v : zero.data()) CHECK(v == 0.0f);

  std::mt19937_64 rng(1);
  std::bernoulli_distribution coin(0.5);
  std::vector<float> bits(24);
  for (auto& b : bits) b = coin(rng) ? 1.0f : 0.0f;
  auto wr = testutil::randn({1, 3, 1, 2, 2, 1}, rng);
  auto out = token_mixer(Tensor({1, 3, 1, 2, 2, 2}, bits), wr, ctx, "t");
  for (float v : out.data()) {
    bool ok = v == 0.0f;
    for (float x : wr.data()) ok = ok || v == x;
    CHECK(ok);
  }
}

TEST_CASE("channel mixer examples") {
  auto ctx = passthrough();
  Tensor w({1, 2, 2}, {0.3f, 0.1f, 0.2f, 0.4f});
  auto a = channel_mixer(Tensor({1, 2}, {1, 0}), w, ctx, "c");
  CHECK(a.data()[0] == doctest::Approx(0.3));
  CHECK(a.data()[1] == doctest::Approx(0.1));
  auto b = channel_mixer(Tensor({1, 2}, {1, 1}), w, ctx, "c");
  CHECK(b.data()[0] == doctest::Approx(0.5));
  CHECK(b.data()[1] == doctest::Approx(0.5));
  Tensor eye({2, 2, 2}, {1, 0, 0, 1, 1, 0, 0, 1});
  Tensor in({1, 4}, {1, 0, 0, 1});
  CHECK(vec(channel_mixer(in, eye, ctx, "c")) == vec(in));

  // groups = C, D = 1 is a per-channel scale
  Tensor scale({4, 1, 1}, {0.5f, -1.0f, 2.0f, 3.0f});
  Tensor spikes({2, 4}, {1, 1, 0, 1, 0, 1, 1, 1});
  auto y = channel_mixer(spikes, scale, ctx, "c");
  auto expect = ops::hadamard_multiply(spikes, Tensor({4}, {0.5f, -1.0f, 2.0f, 3.0f}));
  CHECK(vec(y) == vec(expect));

  CHECK_THROWS_AS(channel_mixer(Tensor::zeros({1, 5}), Tensor::zeros({2, 2, 2}), ctx, "c"), ShapeError);
}

TEST_CASE("swm preserves shape and vanishes with zero weights") {
  std::mt19937_64 rng(2);
  RunContext ctx;
  ctx.train = true;
  for (int dims : {3, 2}) {
    auto swm = Swm<float>::make(8, 4, 8, 8, 2, dims, rng);
    auto x = testutil::randn({4, 2, 8, 8, 8}, rng, 2.0);
    auto y = swm(x, ctx, "swm");
    CHECK(y.shape() == x.shape());
    for (auto* w : {&swm.w1, &swm.w2, &swm.w3, &swm.w4, &swm.w5}) std::fill(w->mutable_data().begin(), w->mutable_data().end(), 0.0f);
    auto z = swm(x, ctx, "swm");
    for (float v : z.data()) CHECK(v == 0.0f);
  }
  CHECK(Swm<float>::make(8, 4, 8, 8, 2, 3, rng).w2.shape() == Shape{7, 2, 4, 4});
  CHECK(Swm<float>::make(8, 4, 8, 8, 2, 2, rng).w2.shape() == Shape{3, 4, 4});
  CHECK_THROWS(Swm<float>::make(8, 6, 8, 8, 2, 3, rng));
  CHECK_THROWS(Swm<float>::make(8, 4, 8, 8, 3, 3, rng));
}

TEST_CASE("3D swm is sensitive to time order, 2D swm is equivariant") {
  std::mt19937_64 rng(3);
  RunContext ctx;
  auto x = testutil::randn({8, 2, 8, 8, 4}, rng, 2.0);
  auto xr = reverse_time(x);

  auto s3 = Swm<float>::make(4, 8, 8, 8, 2, 3, rng);
  CHECK(max_abs_diff(s3(xr, ctx, "s"), reverse_time(s3(x, ctx, "s"))) > 1e-2);

  auto s2 = Swm<float>::make(4, 8, 8, 8, 2, 2, rng);
  CHECK(max_abs_diff(s2(xr, ctx, "s"), reverse_time(s2(x, ctx, "s"))) <= 1e-5);
}

TEST_CASE("swm spike sites are binary") {
  std::mt19937_64 rng(4);
  SpikeMonitor mon;
  RunContext ctx;
  auto block = WaveformerBlock<float>{Swm<float>::make(8, 4, 8, 8, 2, 3, rng), Mlp<float>::make(8, 16, rng)};
  block(testutil::randn({4, 2, 8, 8, 8}, rng, 2.0), ctx, "b");
  CHECK(mon.total().non_binary == 0);
  CHECK(mon.total().spikes > 0);
  CHECK(mon.sites().count("b.swm.dwt_sn") == 1);
  CHECK(mon.sites().count("b.mlp.sn2") == 1);
}

TEST_CASE("waveformer block residual identity and shape") {
  std::mt19937_64 rng(5);
  RunContext ctx;
  ctx.train = true;
  WaveformerBlock<float> block{Swm<float>::make(16, 4, 8, 8, 4, 3, rng), Mlp<float>::make(16, 32, rng)};
  auto x = testutil::randn({4, 2, 8, 8, 16}, rng, 2.0);
  CHECK(block(x, ctx, "b").shape() == x.shape());
  for (auto* w : {&block.swm.w1, &block.swm.w2, &block.swm.w3, &block.swm.w4, &block.swm.w5, &block.mlp.w1,
                  &block.mlp.w2, &block.mlp.bn2.gamma}) {
    std::fill(w->mutable_data().begin(), w->mutable_data().end(), 0.0f);
  }
  CHECK(vec(block(x, ctx, "b")) == vec(x));
}

TEST_CASE("waveformer block gradient matches finite differences") {
  std::mt19937_64 rng(6);
  RunContext ctx;
  ctx.train = true;
  ctx.lif.detach_reset = false;
  WaveformerBlock<double> block{Swm<double>::make(4, 4, 4, 4, 2, 3, rng), Mlp<double>::make(4, 8, rng)};
  auto x = testutil::randn<double>({4, 2, 4, 4, 4}, rng, 1.5);
  auto readout = testutil::randn<double>({4, 2, 4, 4, 4}, rng);
  auto program = [&] {
    ops::SurrogateForwardGuard sg;
    return ops::sum_all(ops::hadamard_multiply(block(x, ctx, "b"), readout));
  };
  auto rep = check_gradients<double>(program, {block.swm.w1, block.swm.w2, block.swm.w4}, 1e-6);
  CHECK(rep.max_rel_error < 1e-3);
  auto rep_x = check_gradients<double>(program, {x}, 1e-6);
  CHECK(rep_x.max_rel_error < 1e-3);
}
