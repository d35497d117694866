#include <doctest.h>

#include <cmath>
#include <random>

#include "snnhash/gradcheck.hpp"
#include "snnhash/hash_loss.hpp"
#include "snnhash/ops.hpp"
#include "test_util.hpp"

using namespace snnhash;
using testutil::vec;

namespace {

// straight double loop, no tensors
double reference_loss(const std::vector<float>& b, const std::vector<float>& m, int N, int L) {
  double total = 0;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      double dot = 0;
      for (int l = 0; l < L; ++l) dot += static_cast<double>(b[i * L + l]) * b[j * L + l];
      const double w = 0.5 * dot;
      total += std::log1p(std::exp(w)) - m[i * N + j] * w;
    }
  return total;
}

// one ordered pair, isolated by removing the self terms of a 2-item batch
double pair_loss(const std::vector<float>& a, const std::vector<float>& b, float m) {
  const auto L = static_cast<std::int64_t>(a.size());
  std::vector<float> ab(a);
  ab.insert(ab.end(), b.begin(), b.end());
  const double both = pairwise_similarity_loss(Tensor({2, L}, ab), Tensor({2, 2}, {1, m, m, 1})).item();
  const double sa = pairwise_similarity_loss(Tensor({1, L}, a), Tensor({1, 1}, {1})).item();
  const double sb = pairwise_similarity_loss(Tensor({1, L}, b), Tensor({1, 1}, {1})).item();
  return (both - sa - sb) / 2;
}

}  // namespace

TEST_CASE("pairwise loss closed-form values") {
  CHECK(std::abs(pair_loss({1, 1}, {1, 1}, 1.0f) - 0.313262) < 1e-5);
  CHECK(std::abs(pair_loss({1, 1}, {1, 1}, 0.0f) - 1.313262) < 1e-5);
  CHECK(std::abs(pair_loss({1, -1}, {1, 1}, 0.0f) - 0.693147) < 1e-5);
  CHECK(std::abs(pair_loss({1, -1}, {1, 1}, 1.0f) - 0.693147) < 1e-5);
  // a single code against itself is exactly one pair
  auto one = pairwise_similarity_loss(Tensor({1, 2}, {1, 1}), Tensor({1, 1}, {1}));
  CHECK(std::abs(one.item() - 0.313262) < 1e-5);
}

TEST_CASE("pairwise loss matches the double loop") {
  std::mt19937_64 rng(3);
  std::bernoulli_distribution coin(0.5);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<float> b(8 * 16), m(64);
    for (auto& x : b) x = coin(rng) ? 1.0f : -1.0f;
    for (int i = 0; i < 8; ++i)
      for (int j = i; j < 8; ++j) m[static_cast<std::size_t>(i * 8 + j)] = m[static_cast<std::size_t>(j * 8 + i)] = static_cast<float>(u(rng));
    const double got = pairwise_similarity_loss(Tensor({8, 16}, b), Tensor({8, 8}, m)).item();
    const double want = reference_loss(b, m, 8, 16);
    CHECK(std::abs(got - want) / std::max(1.0, std::abs(want)) < 1e-6);
  }
  // large inner products stay finite
  std::vector<float> big(2 * 4000, 1.0f);
  CHECK(std::isfinite(pairwise_similarity_loss(Tensor({2, 4000}, big), Tensor({2, 2}, {0, 0, 0, 0})).item()));
  CHECK_THROWS_AS(pairwise_similarity_loss(Tensor({1, 2}, {NAN, 1}), Tensor({1, 1}, {1})), DomainError);
  CHECK_THROWS_AS(pairwise_similarity_loss(Tensor({2, 2}, {1, 1, 1, 1}), Tensor({1, 1}, {1})), ShapeError);
}

TEST_CASE("pair loss is monotone in the inner product") {
  // with L = 8 the inner product takes values -8, -6, ..., 8
  for (float m : {0.0f, 1.0f}) {
    double prev = m == 1.0f ? 1e9 : -1e9;
    for (int flips = 8; flips >= 0; --flips) {
      std::vector<float> a(8, 1.0f), b(8, 1.0f);
      for (int k = 0; k < flips; ++k) b[static_cast<std::size_t>(k)] = -1.0f;
      const double v = pair_loss(a, b, m);
      if (m == 1.0f) CHECK(v < prev);
      else CHECK(v > prev);
      prev = v;
    }
  }
}

TEST_CASE("pairwise loss gradient") {
  std::mt19937_64 rng(4);
  auto codes = testutil::randn<double>({5, 6}, rng, 1.0, true);
  std::vector<double> m(25);
  for (int i = 0; i < 25; ++i) m[static_cast<std::size_t>(i)] = (i % 3) * 0.5;
  BasicTensor<double> M({5, 5}, m);
  // go through the primitives directly in double
  auto f = [&]() {
    auto w = ops::scalar_scale(ops::matmul(codes, ops::permute_axes(codes, {1, 0})), 0.5);
    return ops::sum_all(ops::subtract(ops::softplus(w), ops::hadamard_multiply(M, w)));
  };
  auto rep = check_gradients<double>(f, {codes}, 1e-6);
  CHECK(rep.max_rel_error < 1e-6);
  auto sp = BasicTensor<double>({4}, {-800.0, -1.0, 0.0, 800.0});
  auto out = vec(ops::softplus(sp));
  CHECK(out[0] == doctest::Approx(0.0));
  CHECK(out[2] == doctest::Approx(std::log(2.0)));
  CHECK(out[3] == doctest::Approx(800.0));
}

TEST_CASE("soft similarity accumulation") {
  auto st = SoftSimilarityState::make(3);
  std::vector<int> y{0, 0, 1, 2}, p{0, 0, 1, 2};
  // rows: [1,0], [1,0], [1,1], [0,1]
  std::vector<float> H{1, 0, 1, 0, 1, 1, 0, 1};
  accumulate_soft(st, H, 4, 2, y, p);
  CHECK(st.sum[0] == doctest::Approx(1.0));  // identical vectors
  CHECK(st.count[0] == 1);
  CHECK(st.sum[1] == doctest::Approx(2 / std::sqrt(2.0)));  // two pairs at 1/sqrt 2
  CHECK(st.count[1] == 2);
  CHECK(st.sum[3] == st.sum[1]);  // symmetric
  CHECK(st.sum[2] == doctest::Approx(0.0));  // orthogonal
  CHECK(st.count[2] == 2);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) CHECK(st.sum[static_cast<std::size_t>(a * 3 + b)] == st.sum[static_cast<std::size_t>(b * 3 + a)]);

  // a wrong prediction removes its pairs; zero rows are tallied
  auto st2 = SoftSimilarityState::make(3);
  std::vector<int> p2{0, 1, 1, 2};
  std::vector<float> H2{1, 0, 1, 0, 0, 0, 0, 1};
  accumulate_soft(st2, H2, 4, 2, y, p2);
  CHECK(st2.count[0] == 0);
  CHECK(st2.zero_norm_pairs == 2);  // (0,2) and (2,3)
  CHECK(st2.count[2] == 1);

  auto S = finalize_soft(st, 0.3);
  CHECK(S[0] == 1.0);
  CHECK(S[1] == doctest::Approx(1 / std::sqrt(2.0)));
  CHECK(S[2] == 0.0);
  CHECK(S[4] == 1.0);  // diagonal forced even without evidence
}

TEST_CASE("finalize thresholds") {
  auto st = SoftSimilarityState::make(2);
  st.sum = {3, 1.5, 0.75, 0};
  st.count = {3, 3, 3, 0};
  auto S = finalize_soft(st, 0.3);
  CHECK(S[1] == 0.5);
  CHECK(S[2] == 0.0);  // 0.25 <= tau
  CHECK(S[3] == 1.0);
  // identical per-class vectors give a unit diagonal before forcing, too
  auto id = SoftSimilarityState::make(2);
  std::vector<float> H{2, 0, 2, 0, 0, 3, 0, 3};
  std::vector<int> y{0, 0, 1, 1};
  accumulate_soft(id, H, 4, 2, y, y);
  CHECK(id.sum[0] / static_cast<double>(id.count[0]) == 1.0);
  CHECK(id.sum[3] / static_cast<double>(id.count[3]) == 1.0);
}

TEST_CASE("blend and expand") {
  auto hard = hard_class_matrix(2);
  std::vector<double> soft{1, 0.6, 0.6, 1};
  CHECK(blend(hard, soft, 1.0) == hard);
  CHECK(blend(hard, soft, 0.0) == soft);
  auto half = blend(hard, soft, 0.5);
  CHECK(half[1] == doctest::Approx(0.3));
  CHECK(half[0] == 1.0);
  CHECK_THROWS_AS(blend(hard, soft, 1.5), std::invalid_argument);
  std::vector<int> y{1, 0, 1};
  auto M = vec(expand_to_batch(half, 2, y));
  CHECK(M == std::vector<float>{1, 0.3f, 1, 0.3f, 1, 0.3f, 1, 0.3f, 1});
  CHECK(vec(hard_similarity(y)) == std::vector<float>{1, 0, 1, 0, 1, 0, 1, 0, 1});
}

TEST_CASE("total loss") {
  std::vector<int> y{0};
  auto lp = Tensor({1, 2}, {std::log(0.5f), std::log(0.5f)});
  auto codes = Tensor({1, 2}, {1, 1});
  auto M = Tensor({1, 1}, {1});
  auto only_cls = total_loss(codes, M, lp, y, 0.0, 1.0);
  CHECK(only_cls.total.item() == doctest::Approx(0.693147).epsilon(1e-6));
  auto mixed = total_loss(codes, M, lp, y, 0.2, 0.8);
  CHECK(mixed.total.item() == doctest::Approx(0.2 * 0.313262 + 0.8 * 0.693147).epsilon(1e-5));
  CHECK(mixed.similarity == doctest::Approx(0.313262).epsilon(1e-5));

  auto dead = Tensor({1, 2}, {-1e30f, 0.0f});
  auto c = total_loss(codes, M, dead, y, 0.0, 1.0);
  CHECK(c.clamped == 1);
  CHECK(c.total.item() == doctest::Approx(-std::log(1e-12)));
  CHECK_THROWS_AS(total_loss(codes, M, lp, y, -1.0, 1.0), std::invalid_argument);
}

TEST_CASE("round scheduler") {
  RoundSchedule full_scale{50, 20, 0};
  auto d = round_scheduler(10, 200, full_scale);
  CHECK_FALSE(d.use_soft);
  CHECK(d.lambda == 1.0);
  CHECK_FALSE(d.finalize_now);
  CHECK(round_scheduler(49, 200, full_scale).finalize_now);  // end of the 50th epoch
  CHECK(round_scheduler(50, 200, full_scale).use_soft);
  CHECK_FALSE(round_scheduler(50, 200, full_scale).finalize_now);
  CHECK(round_scheduler(69, 200, full_scale).finalize_now);
  CHECK(round_scheduler(199, 200, full_scale).lambda == 0.0);
  CHECK_THROWS_AS(round_scheduler(200, 200, full_scale), std::out_of_range);

  RoundSchedule desk;  // 10 / 5 / last 5
  std::vector<int> edges;
  double prev = 1.0;
  for (int e = 0; e < 40; ++e) {
    auto r = round_scheduler(e, 40, desk);
    if (r.finalize_now) edges.push_back(e);
    CHECK(r.lambda <= prev);
    CHECK(r.lambda >= 0.0);
    prev = r.lambda;
  }
  CHECK(edges == std::vector<int>{9, 14, 19, 24, 29, 34, 35, 36, 37, 38, 39});
  CHECK(round_scheduler(0, 40, desk).lambda == 1.0);
  CHECK(round_scheduler(39, 40, desk).lambda == 0.0);
}

TEST_CASE("soft matrix json") {
  auto st = SoftSimilarityState::make(2);
  auto j = soft_matrix_to_json(finalize_soft(st, 0.3), 2, &st);
  CHECK(j["classes"] == 2);
  CHECK(j["matrix"][0][0] == 1.0);
  CHECK(j["counts"][1][0] == 0);
}
