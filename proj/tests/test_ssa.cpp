#include <doctest.h>

#include <random>

#include "snnhash/gradcheck.hpp"
#include "snnhash/ssa.hpp"
#include "test_util.hpp"

using namespace snnhash;
using testutil::vec;

TEST_CASE("spiking attention worked example") {
  RunContext ctx;  // gamma 2, v_th 1
  Tensor q({1, 2, 2}, {1, 0, 0, 1});
  Tensor k({1, 2, 2}, {1, 0, 1, 1});
  Tensor v({1, 2, 2}, {1, 1, 0, 1});
  auto kv = ops::matmul(ops::permute_axes(k, {0, 2, 1}), v);
  auto raw = ops::matmul(q, kv);
  CHECK(vec(raw) == std::vector<float>{1, 2, 0, 1});
  CHECK(vec(spiking_attention(q, k, v, 4.0, ctx, "a")) == std::vector<float>{1, 1, 0, 1});
  auto zero = spiking_attention(q, k, Tensor::zeros({1, 2, 2}), 4.0, ctx, "a");
  for (float x : zero.data()) CHECK(x == 0.0f);
  CHECK_THROWS_AS(spiking_attention(q, k, Tensor::zeros({1, 2, 3}), 1.0, ctx, "a"), ShapeError);
}

TEST_CASE("attention products of binaries are nonnegative integers") {
  std::mt19937_64 rng(1);
  std::bernoulli_distribution coin(0.4);
  auto bits = [&](Shape s) {
    std::vector<float> v(static_cast<std::size_t>(numel(s)));
    for (auto& x : v) x = coin(rng) ? 1.0f : 0.0f;
    return Tensor(s, v);
  };
  auto q = bits({2, 6, 4}), k = bits({2, 6, 4}), v = bits({2, 6, 4});
  auto raw = ops::matmul(q, ops::matmul(ops::permute_axes(k, {0, 2, 1}), v));
  for (float x : raw.data()) {
    CHECK(x >= 0.0f);
    CHECK(x == std::round(x));
  }
}

TEST_CASE("qkv projection shapes and binarity") {
  std::mt19937_64 rng(2);
  RunContext ctx;
  ctx.train = true;
  auto ssa = Ssa<float>::make(16, 2, 0.125, rng);
  auto qkv = ssa.qkv_project(testutil::randn({4, 1, 4, 4, 16}, rng, 2.0), ctx, "s");
  for (const auto* t : {&qkv.q, &qkv.k, &qkv.v}) {
    CHECK(t->shape() == Shape{4, 1, 2, 16, 8});
    for (float x : t->data()) CHECK((x == 0.0f || x == 1.0f));
  }
  for (auto* w : {&ssa.wq, &ssa.wk, &ssa.wv}) std::fill(w->mutable_data().begin(), w->mutable_data().end(), 0.0f);
  auto z = ssa.qkv_project(testutil::randn({4, 1, 4, 4, 16}, rng, 2.0), ctx, "s");
  for (float x : z.q.data()) CHECK(x == 0.0f);
  CHECK_THROWS(Ssa<float>::make(16, 3, 0.125, rng));
}

TEST_CASE("transformer block shape and zero projection") {
  std::mt19937_64 rng(3);
  RunContext ctx;
  ctx.train = true;
  TransformerBlock<float> block{Ssa<float>::make(32, 2, 0.125, rng), Mlp<float>::make(32, 64, rng)};
  auto x = testutil::randn({4, 2, 4, 4, 32}, rng, 2.0);
  CHECK(block(x, ctx, "t").shape() == x.shape());
  std::fill(block.ssa.bo.gamma.mutable_data().begin(), block.ssa.bo.gamma.mutable_data().end(), 0.0f);
  auto y = block(x, ctx, "t");
  auto expect = ops::add(x, block.mlp(x, ctx, "m"));
  for (std::size_t i = 0; i < expect.data().size(); ++i) CHECK(y.data()[i] == doctest::Approx(expect.data()[i]).epsilon(1e-6));
}

TEST_CASE("attention is token-permutation equivariant") {
  std::mt19937_64 rng(4);
  RunContext ctx;
  std::bernoulli_distribution coin(0.5);
  std::vector<float> q(3 * 5 * 4), k(q.size()), v(q.size());
  for (auto* arr : {&q, &k, &v})
    for (auto& x : *arr) x = coin(rng) ? 1.0f : 0.0f;
  Tensor Q({3, 5, 4}, q), K({3, 5, 4}, k), V({3, 5, 4}, v);
  const std::vector<std::int64_t> perm{3, 0, 4, 1, 2};
  auto permute_tokens = [&](const Tensor& x) {
    std::vector<Tensor> rows;
    for (auto p : perm) rows.push_back(ops::slice(x, 1, p, 1));
    return ops::concat(rows, 1);
  };
  auto out = spiking_attention(Q, K, V, 0.5, ctx, "a");
  auto out_p = spiking_attention(permute_tokens(Q), permute_tokens(K), permute_tokens(V), 0.5, ctx, "a");
  CHECK(vec(out_p) == vec(permute_tokens(out)));
}

TEST_CASE("with per-step neurons each step depends only on its own input") {
  std::mt19937_64 rng(5);
  RunContext ctx;
  ctx.stateless_neurons = true;
  auto ssa = Ssa<float>::make(8, 2, 0.25, rng);
  for (auto* bn : {&ssa.bq, &ssa.bk, &ssa.bv, &ssa.bo}) bn->running_var.mutable_data()[0] = 0.5f;
  auto x = testutil::randn({3, 1, 2, 2, 8}, rng, 2.0);
  auto y = ssa(x, ctx, "s");
  auto x2 = x.clone();
  auto d = x2.mutable_data();
  for (std::size_t i = 32; i < d.size(); ++i) d[i] = -d[i];  // change steps 1 and 2 only
  auto y2 = ssa(x2, ctx, "s");
  for (std::size_t i = 0; i < 32; ++i) CHECK(y.data()[i] == y2.data()[i]);
}

TEST_CASE("transformer block gradient matches finite differences") {
  std::mt19937_64 rng(6);
  RunContext ctx;
  ctx.train = true;
  ctx.lif.detach_reset = false;
  TransformerBlock<double> block{Ssa<double>::make(4, 2, 0.5, rng), Mlp<double>::make(4, 8, rng)};
  auto x = testutil::randn<double>({2, 2, 2, 2, 4}, rng, 1.5);
  auto r = testutil::randn<double>({2, 2, 2, 2, 4}, rng);
  auto program = [&] {
    ops::SurrogateForwardGuard sg;
    return ops::sum_all(ops::hadamard_multiply(block(x, ctx, "t"), r));
  };
  CHECK(check_gradients<double>(program, {block.ssa.wq, block.ssa.wv, x}, 1e-6).max_rel_error < 1e-3);
}
