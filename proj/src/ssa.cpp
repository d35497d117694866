#include "snnhash/ssa.hpp"

#include "ops_internal.hpp"

namespace snnhash {

template <typename T>
BasicTensor<T> spiking_attention(const BasicTensor<T>& q, const BasicTensor<T>& k, const BasicTensor<T>& v,
                                 double scale, const RunContext& ctx, const std::string& site) {
  if (q.rank() < 3 || q.shape() != k.shape() || q.shape() != v.shape()) {
    throw ShapeError("spiking_attention: q/k/v shapes " + shape_str(q.shape()) + ", " + shape_str(k.shape()) +
                     ", " + shape_str(v.shape()) + " must agree");
  }
  const int r = static_cast<int>(q.rank());
  std::vector<int> swap_last(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) swap_last[static_cast<std::size_t>(i)] = i;
  std::swap(swap_last[static_cast<std::size_t>(r - 1)], swap_last[static_cast<std::size_t>(r - 2)]);
  // Q (K^T V): the d x d product keeps the cost linear in tokens
  auto kv = ops::matmul(ops::permute_axes(k, swap_last), v);
  auto att = ops::scalar_scale(ops::matmul(q, kv), scale);
  return spike(att, ctx, site);
}

template <typename T>
Ssa<T> Ssa<T>::make(std::int64_t C, std::int64_t heads, double scale, std::mt19937_64& rng) {
  if (heads < 1 || C % heads != 0) {
    throw std::invalid_argument("ssa: embedding dim " + std::to_string(C) + " not divisible by heads " +
                                std::to_string(heads));
  }
  if (!(scale > 0.0)) throw std::invalid_argument("ssa: scale must be positive");
  Ssa s;
  s.heads = heads;
  s.scale = scale;
  s.wq = init_fan_in<T>({C, C}, C, 1.0, rng);
  s.wk = init_fan_in<T>({C, C}, C, 1.0, rng);
  s.wv = init_fan_in<T>({C, C}, C, 1.0, rng);
  s.wo = init_fan_in<T>({C, C}, C, 1.0, rng);
  s.bq = BatchNorm<T>::make(C);
  s.bk = BatchNorm<T>::make(C);
  s.bv = BatchNorm<T>::make(C);
  s.bo = BatchNorm<T>::make(C);
  return s;
}

template <typename T>
QkvSpikes<T> Ssa<T>::qkv_project(const BasicTensor<T>& x, const RunContext& ctx, const std::string& site) {
  if (x.rank() != 5) throw ShapeError("ssa: expected [T,B,H,W,C], got " + shape_str(x.shape()));
  const std::int64_t steps = x.shape()[0], B = x.shape()[1], N = x.shape()[2] * x.shape()[3], C = x.shape()[4];
  if (C % heads != 0) {
    throw ShapeError("ssa: channels " + std::to_string(C) + " not divisible by heads " + std::to_string(heads));
  }
  if (wq.shape()[1] != C) throw ShapeError("ssa: input " + shape_str(x.shape()) + " does not match projections");
  auto xs = spike(x, ctx, site + ".in_sn");
  auto project = [&](BasicTensor<T>& w, BatchNorm<T>& bn, const char* tag) {
    auto s = spike(bn(ops::linear(xs, w), ctx), ctx, site + "." + tag + "_sn");
    s = ops::reshape(s, {steps, B, N, heads, C / heads});
    return ops::permute_axes(s, {0, 1, 3, 2, 4});
  };
  return {project(wq, bq, "q"), project(wk, bk, "k"), project(wv, bv, "v")};
}

template <typename T>
BasicTensor<T> Ssa<T>::operator()(const BasicTensor<T>& x, const RunContext& ctx, const std::string& site) {
  auto qkv = qkv_project(x, ctx, site);
  auto a = spiking_attention(qkv.q, qkv.k, qkv.v, scale, ctx, site + ".attn_sn");
  // [T, B, heads, N, d] -> [T, B, H, W, C]
  a = ops::reshape(ops::permute_axes(a, {0, 1, 3, 2, 4}), x.shape());
  return bo(ops::linear(a, wo), ctx);
}

template <typename T>
void Ssa<T>::visit(const std::string& prefix, const ParamVisitor<T>& f) {
  f(prefix + ".q.weight", wq, ParamKind::kWeight);
  bq.visit(prefix + ".q.bn", f);
  f(prefix + ".k.weight", wk, ParamKind::kWeight);
  bk.visit(prefix + ".k.bn", f);
  f(prefix + ".v.weight", wv, ParamKind::kWeight);
  bv.visit(prefix + ".v.bn", f);
  f(prefix + ".proj.weight", wo, ParamKind::kWeight);
  bo.visit(prefix + ".proj.bn", f);
}

template <typename T>
BasicTensor<T> TransformerBlock<T>::operator()(const BasicTensor<T>& x, const RunContext& ctx,
                                               const std::string& site) {
  auto y = ops::add(x, ssa(x, ctx, site + ".ssa"));
  return ops::add(y, mlp(y, ctx, site + ".mlp"));
}

template <typename T>
void TransformerBlock<T>::visit(const std::string& prefix, const ParamVisitor<T>& f) {
  ssa.visit(prefix + ".ssa", f);
  mlp.visit(prefix + ".mlp", f);
}

#define SNNHASH_SSA(T)                                                                                   \
  template BasicTensor<T> spiking_attention(const BasicTensor<T>&, const BasicTensor<T>&,                \
                                            const BasicTensor<T>&, double, const RunContext&,            \
                                            const std::string&);                                         \
  template struct Ssa<T>;                                                                                \
  template struct TransformerBlock<T>;

SNNHASH_INSTANTIATE(SNNHASH_SSA)

}  // namespace snnhash
