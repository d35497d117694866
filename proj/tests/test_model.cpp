#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "snnhash/model.hpp"
#include "test_util.hpp"

using namespace snnhash;
using testutil::vec;

namespace {

// small enough to run a backward pass in a unit test
ModelConfig toy_config() {
  ModelConfig c;
  c.steps = 4;
  c.height = c.width = 16;
  c.stem_dim = 8;
  c.stages = {{BlockType::kSwm, 8, 1, true}, {BlockType::kSsa, 16, 1, true}};
  c.hash_bits = 8;
  return c;
}

std::int64_t bn(std::int64_t c) { return 2 * c; }
std::int64_t mlp(std::int64_t c, std::int64_t r) { return 2 * c * c * r + bn(c * r) + bn(c); }
std::int64_t swm3d(std::int64_t C, std::int64_t T, std::int64_t H, std::int64_t W, std::int64_t g) {
  const std::int64_t D = C / g;
  return C * (T / 4) * (H / 4) * (W / 4) + 7 * (T / 2) * (H / 2) * (W / 2) + 7 * (T / 4) * (H / 4) * (W / 4) +
         2 * g * D * D;
}
std::int64_t ssa(std::int64_t C) { return 4 * C * C + 4 * bn(C); }

}  // namespace

TEST_CASE("nano stage trace and parameter count") {
  auto c = ModelConfig::nano();
  c.validate();
  auto sh = c.stage_shapes();
  REQUIRE(sh.size() == 4);
  const std::array<std::int64_t, 4> want[] = {{4, 16, 16, 16}, {4, 8, 8, 24}, {4, 4, 4, 32}, {4, 2, 2, 32}};
  for (int i = 0; i < 4; ++i) CHECK(sh[static_cast<std::size_t>(i)] == want[i]);
  CHECK(c.feature_dim() == 32);

  // count from the declared shapes, stage by stage
  const std::int64_t expected = (8 * 9 * 1 + bn(8)) +
                                (16 * 9 * 8 + bn(16) + swm3d(16, 4, 16, 16, 4) + mlp(16, 2)) +
                                (24 * 9 * 16 + bn(24) + swm3d(24, 4, 8, 8, 4) + mlp(24, 2)) +
                                (32 * 9 * 24 + bn(32) + ssa(32) + mlp(32, 2)) +
                                (32 * 9 * 32 + bn(32) + ssa(32) + mlp(32, 2)) + (16 * 32 + 16) + (3 * 16 + 3);
  auto m = build_model(c, 7);
  CHECK(m.parameter_count() == expected);
  CHECK(expected == 44487);
}

TEST_CASE("same seed gives bit-identical parameters") {
  auto c = ModelConfig::nano();
  auto a = build_model(c, 11), b = build_model(c, 11), d = build_model(c, 12);
  auto sa = a.state(), sb = b.state(), sd = d.state();
  REQUIRE(sa.size() == sb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < sa.size(); ++i) {
    CHECK(sa[i].first == sb[i].first);
    CHECK(vec(sa[i].second) == vec(sb[i].second));
    if (vec(sa[i].second) != vec(sd[i].second)) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("config validation names the problem") {
  auto c = ModelConfig::nano();
  c.stages[2].dim = 33;
  c.stages[3].dim = 33;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("ssa_heads"), ConfigError);
  c = ModelConfig::nano();
  c.stages[1].dim = 12;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("nondecreasing"), ConfigError);
  c = ModelConfig::nano();
  c.steps = 6;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("divisible by 4"), ConfigError);
  c.swm_dims = 2;  // per-step transform has no time constraint
  CHECK_NOTHROW(c.validate());
  c = ModelConfig::nano();
  c.height = c.width = 8;  // 8 -> 4 -> 2 -> 1 -> 1, and SWM at 2x2 breaks
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(build_model(c, 0), ConfigError);
}

TEST_CASE("config json round trip") {
  auto c = toy_config();
  c.hash_variant = HashVariant::kTanhSign;
  c.stateless_neurons = true;
  auto j = config_to_json(c);
  auto back = config_from_json(j);
  CHECK(config_to_json(back) == j);
  j["hash_variant"] = "bogus";
  CHECK_THROWS_AS(config_from_json(j), ConfigError);
}

TEST_CASE("forward shapes, purity and zero input") {
  auto c = ModelConfig::nano();
  auto m = build_model(c, 3);
  RunContext ctx;
  ctx.train = false;
  std::mt19937_64 rng(5);
  auto one = testutil::uniform<float>({4, 1, 32, 32, 1}, rng, 0.0, 1.0);
  auto f = forward_features(m, one, ctx);
  CHECK(f.shape() == Shape{4, 1, 32});

  // batch of two identical samples gives identical rows
  auto two = ops::concat(std::vector<Tensor>{one, one}, 1);
  RunContext train = ctx;
  train.train = true;
  auto out = forward(m, two, train);
  CHECK(out.features.shape() == Shape{4, 2, 32});
  CHECK(out.code.shape() == Shape{2, 16});
  CHECK(out.log_probs.shape() == Shape{2, 3});
  auto codes = vec(out.code);
  for (int i = 0; i < 16; ++i) CHECK(codes[static_cast<std::size_t>(i)] == codes[static_cast<std::size_t>(16 + i)]);
  for (float b : codes) CHECK((b == 0.0f || b == 1.0f));
  auto sc = vec(out.signed_codes);
  for (std::size_t i = 0; i < sc.size(); ++i) CHECK(sc[i] == 2.0f * codes[i] - 1.0f);

  auto zero = Tensor::zeros({4, 1, 32, 32, 1});
  auto z1 = vec(forward(m, zero, ctx).features), z2 = vec(forward(m, zero, ctx).features);
  CHECK(z1 == z2);

  CHECK_THROWS_AS(forward(m, Tensor::zeros({4, 1, 32, 32, 2}), ctx), ShapeError);
  CHECK_THROWS_AS(forward(m, Tensor::zeros({2, 1, 32, 32, 1}), ctx), ShapeError);
}

TEST_CASE("AND over time equals the logical oracle") {
  CHECK(vec(and_over_time(Tensor({2, 3}, {1, 0, 1, 1, 1, 0}))) == std::vector<float>{1, 0, 0});
  CHECK(vec(and_over_time(Tensor({1, 3}, {1, 0, 1}))) == std::vector<float>{1, 0, 1});
  // every binary pattern for each (T, L) with T*L <= 16
  for (int T = 1; T <= 4; ++T) {
    for (int L = 1; L <= 8 && T * L <= 16; ++L) {
      const std::uint32_t n = 1u << (T * L);
      int bad = 0;
      for (std::uint32_t mask = 0; mask < n; ++mask) {
        std::vector<float> s(static_cast<std::size_t>(T * L));
        for (int k = 0; k < T * L; ++k) s[static_cast<std::size_t>(k)] = (mask >> k) & 1u ? 1.0f : 0.0f;
        auto code = vec(and_over_time(Tensor({T, L}, s)));
        for (int l = 0; l < L; ++l) {
          bool all = true;
          for (int t = 0; t < T; ++t) all = all && ((mask >> (t * L + l)) & 1u);
          if (code[static_cast<std::size_t>(l)] != (all ? 1.0f : 0.0f)) ++bad;
        }
      }
      CHECK_MESSAGE(bad == 0, "T=" << T << " L=" << L);
    }
  }
}

TEST_CASE("spiking hash layer") {
  RunContext ctx;
  // constant drive 3 per step: H=1.5 at t0 fires, resets, and fires again
  auto f = Tensor({2, 1, 1}, {1, 1});
  auto w = Tensor({2, 1}, {3, 0});
  auto b = Tensor({2}, {0, 0});
  auto h = hash_layer_spiking(f, w, b, ctx);
  CHECK(h.spikes.shape() == Shape{2, 1, 2});
  CHECK(vec(h.code) == std::vector<float>{1, 0});
  auto mp = vec(h.mean_potential);
  CHECK(mp[0] == doctest::Approx(1.5));
  CHECK(mp[1] == doctest::Approx(0.0));
}

TEST_CASE("tanh-sign hash") {
  // pre-activation [0.3, -2.0, 0]
  auto w = Tensor({3, 1}, {0.3f, -2.0f, 0.0f});
  auto b = Tensor::zeros({3});
  auto h = hash_layer_tanh_sign(Tensor({1, 1}, {1}), w, b);
  CHECK(vec(h.code) == std::vector<float>{1, 0, 1});
  std::mt19937_64 rng(2);
  auto x = testutil::randn<float>({50, 4}, rng, 3.0);
  auto ww = testutil::randn<float>({6, 4}, rng);
  auto bb = Tensor::zeros({6});
  auto pre = vec(ops::linear(x, ww, bb));
  auto code = vec(hash_layer_tanh_sign(x, ww, bb).code);
  for (std::size_t i = 0; i < pre.size(); ++i) CHECK(code[i] == (pre[i] >= 0.0f ? 1.0f : 0.0f));
}

TEST_CASE("classifier probabilities") {
  auto eye = Tensor({2, 2}, {1, 0, 0, 1});
  auto zb = Tensor::zeros({2});
  auto lp = vec(classify(Tensor({1, 2}, {0.7f, 0.7f}), eye, zb));
  CHECK(std::exp(lp[0]) == doctest::Approx(0.5));
  CHECK(std::exp(lp[1]) == doctest::Approx(0.5));
  auto sat = vec(classify(Tensor({1, 2}, {200.0f, -200.0f}), eye, zb));
  CHECK(std::exp(sat[0]) == doctest::Approx(1.0));
  CHECK(std::isfinite(sat[1]));

  std::mt19937_64 rng(9);
  auto logits = testutil::randn<float>({20, 7}, rng, 5.0);
  auto w = Tensor::zeros({7, 7});
  for (int i = 0; i < 7; ++i) w.mutable_data()[static_cast<std::size_t>(i * 8)] = 1.0f;
  auto p = vec(classify(logits, w, Tensor::zeros({7})));
  for (int r = 0; r < 20; ++r) {
    double s = 0;
    for (int k = 0; k < 7; ++k) s += std::exp(static_cast<double>(p[static_cast<std::size_t>(r * 7 + k)]));
    CHECK(std::abs(s - 1.0) < 1e-6);
    auto row = softmax_row(logits.data().subspan(static_cast<std::size_t>(r * 7), 7));
    CHECK(std::abs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0) < 1e-6);
  }
}

TEST_CASE("hash gradient path is alive") {
  auto c = toy_config();
  auto m = build_model(c, 21);
  RunContext ctx;
  ctx.train = true;  // an untrained net in eval mode barely spikes
  std::mt19937_64 rng(4);
  auto x = testutil::uniform<float>({4, 4, 16, 16, 1}, rng, 0.0, 1.0);
  auto out = forward(m, x, ctx);
  // pull codes of items 0/1 together and push 2/3 apart, plus the class head
  auto s = out.signed_codes;
  auto loss = ops::add(ops::sum_all(ops::hadamard_multiply(ops::slice(s, 0, 0, 2), ops::slice(s, 0, 2, 2))),
                       ops::sum_all(ops::slice(out.log_probs, 1, 0, 1)));
  backward(loss);
  REQUIRE(m.hash_w.has_grad());
  int nonzero = 0;
  for (float g : m.hash_w.grad()) nonzero += g != 0.0f;
  CHECK(nonzero > 0);
  REQUIRE(m.stem_w.has_grad());
  int stem_nonzero = 0;
  for (float g : m.stem_w.grad()) stem_nonzero += g != 0.0f;
  CHECK(stem_nonzero > 0);
}

TEST_CASE("end-to-end determinism") {
  auto c = toy_config();
  std::mt19937_64 rng(8);
  auto x = testutil::uniform<float>({4, 3, 16, 16, 1}, rng, 0.0, 1.0);
  RunContext ctx;
  auto a = build_model(c, 5), b = build_model(c, 5);
  auto oa = forward(a, x, ctx), ob = forward(b, x, ctx);
  CHECK(vec(oa.code) == vec(ob.code));
  CHECK(vec(oa.log_probs) == vec(ob.log_probs));
}

TEST_CASE("state load round trip") {
  auto c = toy_config();
  auto a = build_model(c, 1), b = build_model(c, 2);
  b.load_state(a.state());
  auto sa = a.state(), sb = b.state();
  for (std::size_t i = 0; i < sa.size(); ++i) CHECK(vec(sa[i].second) == vec(sb[i].second));
  auto bad = a.state();
  bad[0].second = Tensor::zeros({1});
  CHECK_THROWS_AS(b.load_state(bad), FormatError);
  bad = a.state();
  bad.pop_back();
  CHECK_THROWS_AS(b.load_state(bad), FormatError);
}

TEST_CASE("pack and unpack bits") {
  std::mt19937_64 rng(6);
  std::bernoulli_distribution coin(0.5);
  for (int len : {1, 7, 8, 9, 16, 33, 64}) {
    std::vector<float> bits(static_cast<std::size_t>(len));
    for (auto& b : bits) b = coin(rng) ? 1.0f : 0.0f;
    auto packed = pack_bits(bits);
    CHECK(packed.size() == static_cast<std::size_t>((len + 7) / 8));
    CHECK(unpack_bits(packed, len) == bits);
  }
  std::vector<float> lsb{1, 0, 0, 0, 0, 0, 0, 0, 0, 1};
  auto p = pack_bits(lsb);
  CHECK(p[0] == 0x01);
  CHECK(p[1] == 0x02);
  std::vector<float> bad{0.5f};
  CHECK_THROWS_AS(pack_bits(bad), DomainError);
}
