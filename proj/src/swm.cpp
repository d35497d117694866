#include "snnhash/swm.hpp"

#include <cmath>

#include "ops_internal.hpp"
#include "snnhash/wavelet.hpp"

namespace snnhash {

template <typename T>
BasicTensor<T> global_mixer(const BasicTensor<T>& low, const BasicTensor<T>& w1, const RunContext& ctx,
                            const std::string& site) {
  return ops::hadamard_multiply(spike(low, ctx, site), w1);
}

template <typename T>
BasicTensor<T> token_mixer(const BasicTensor<T>& bands, const BasicTensor<T>& w, const RunContext& ctx,
                           const std::string& site) {
  return ops::hadamard_multiply(spike(bands, ctx, site), w);
}

template <typename T>
BasicTensor<T> channel_mixer(const BasicTensor<T>& x, const BasicTensor<T>& w, const RunContext& ctx,
                             const std::string& site) {
  if (w.rank() != 3 || x.shape().back() % w.shape()[0] != 0) {
    throw ShapeError("channel_mixer: channels " + std::to_string(x.shape().back()) + " not divisible into " +
                     (w.rank() ? std::to_string(w.shape()[0]) : std::string("?")) + " groups");
  }
  return ops::grouped_contraction(spike(x, ctx, site), w);
}

template <typename T>
Swm<T> Swm<T>::make(std::int64_t C, std::int64_t steps, std::int64_t H, std::int64_t W, std::int64_t groups,
                    int dims, std::mt19937_64& rng) {
  if (dims != 2 && dims != 3) throw std::invalid_argument("swm: dims must be 2 or 3");
  if (groups < 1 || C % groups != 0) {
    throw std::invalid_argument("swm: channels " + std::to_string(C) + " not divisible by groups " +
                                std::to_string(groups));
  }
  if (H % 4 || W % 4 || (dims == 3 && steps % 4)) {
    throw std::invalid_argument("swm: extents (T=" + std::to_string(steps) + ", H=" + std::to_string(H) +
                                ", W=" + std::to_string(W) + ") must be divisible by 4");
  }
  Swm s;
  s.dims = dims;
  s.groups = groups;
  const std::int64_t D = C / groups;
  if (dims == 3) {
    s.w1 = init_uniform<T>({C, steps / 4, H / 4, W / 4}, 0.25, 0.75, rng);
    s.w2 = init_uniform<T>({7, steps / 2, H / 2, W / 2}, 0.25, 0.75, rng);
    s.w3 = init_uniform<T>({7, steps / 4, H / 4, W / 4}, 0.25, 0.75, rng);
  } else {
    s.w1 = init_uniform<T>({C, H / 4, W / 4}, 0.25, 0.75, rng);
    s.w2 = init_uniform<T>({3, H / 2, W / 2}, 0.25, 0.75, rng);
    s.w3 = init_uniform<T>({3, H / 4, W / 4}, 0.25, 0.75, rng);
  }
  const double sd = 1.0 / std::sqrt(static_cast<double>(D));
  s.w4 = init_normal<T>({groups, D, D}, sd, rng);
  s.w5 = init_normal<T>({groups, D, D}, sd, rng);
  return s;
}

namespace {

// Stack bands [T', B, H', W', C] -> [T', nb, B, H', W', C].
template <typename T>
BasicTensor<T> stack_bands(const std::vector<BasicTensor<T>>& bands) {
  std::vector<BasicTensor<T>> parts;
  parts.reserve(bands.size());
  for (const auto& b : bands) {
    Shape s = b.shape();
    s.insert(s.begin() + 1, 1);
    parts.push_back(ops::reshape(b, s));
  }
  return ops::concat(parts, 1);
}

template <typename T>
std::vector<BasicTensor<T>> unstack_bands(const BasicTensor<T>& x) {
  std::vector<BasicTensor<T>> out;
  Shape s = x.shape();
  s.erase(s.begin() + 1);
  for (std::int64_t i = 0; i < x.shape()[1]; ++i) out.push_back(ops::reshape(ops::slice(x, 1, i, 1), s));
  return out;
}

}  // namespace

template <typename T>
BasicTensor<T> Swm<T>::operator()(const BasicTensor<T>& x, const RunContext& ctx_in, const std::string& site) {
  if (x.rank() != 5) throw ShapeError("swm: expected [T,B,H,W,C], got " + shape_str(x.shape()));
  const std::int64_t steps = x.shape()[0], H = x.shape()[2], W = x.shape()[3], C = x.shape()[4];
  RunContext ctx = ctx_in;
  ctx.lif = lif;
  ctx.lif.detach_reset = ctx_in.lif.detach_reset;
  std::vector<int> axes{0, 2, 3};
  if (dims == 2) {
    // per-step transform: no membrane carry-over along time
    ctx.stateless_neurons = true;
    axes = {2, 3};
  }
  const std::int64_t tq = dims == 3 ? steps / 4 : 1, th = dims == 3 ? steps / 2 : 1;
  const std::int64_t nb = dims == 3 ? 7 : 3;
  if (w1.shape()[0] != C || (dims == 3 && w1.shape()[1] != steps / 4) || w1.shape()[dims - 1] != H / 4 ||
      w1.shape()[dims] != W / 4) {
    throw ShapeError("swm: input " + shape_str(x.shape()) + " does not match mixer weight " +
                     shape_str(w1.shape()));
  }

  wavelet::Interleave<T> sn = [&](const BasicTensor<T>& b) { return spike(b, ctx, site + ".dwt_sn"); };
  auto pyr = wavelet::multilevel_dwt(x, axes, 2, sn);

  // weights laid out against [T', bands, B, H', W', C]
  BasicTensor<T> w1b, w2b, w3b;
  if (dims == 3) {
    w1b = ops::reshape(ops::permute_axes(w1, {1, 2, 3, 0}), {tq, 1, H / 4, W / 4, C});
    w2b = ops::reshape(ops::permute_axes(w2, {1, 0, 2, 3}), {th, nb, 1, H / 2, W / 2, 1});
    w3b = ops::reshape(ops::permute_axes(w3, {1, 0, 2, 3}), {tq, nb, 1, H / 4, W / 4, 1});
  } else {
    w1b = ops::reshape(ops::permute_axes(w1, {1, 2, 0}), {1, 1, H / 4, W / 4, C});
    w2b = ops::reshape(w2, {1, nb, 1, H / 2, W / 2, 1});
    w3b = ops::reshape(w3, {1, nb, 1, H / 4, W / 4, 1});
  }

  wavelet::Pyramid<T> mixed;
  mixed.low = global_mixer(pyr.low, w1b, ctx, site + ".global");
  const BasicTensor<T>* tok[2] = {&w2b, &w3b};
  const BasicTensor<T>* chan[2] = {&w4, &w5};
  for (int lv = 0; lv < 2; ++lv) {
    const std::string tag = site + ".level" + std::to_string(lv + 1);
    auto h = token_mixer(stack_bands(pyr.highs[static_cast<std::size_t>(lv)]), *tok[lv], ctx, tag + ".token");
    h = channel_mixer(h, *chan[lv], ctx, tag + ".channel");
    mixed.highs.push_back(unstack_bands(h));
  }
  return wavelet::multilevel_idwt(mixed, axes);
}

template <typename T>
void Swm<T>::visit(const std::string& prefix, const ParamVisitor<T>& f) {
  f(prefix + ".w1", w1, ParamKind::kWeight);
  f(prefix + ".w2", w2, ParamKind::kWeight);
  f(prefix + ".w3", w3, ParamKind::kWeight);
  f(prefix + ".w4", w4, ParamKind::kWeight);
  f(prefix + ".w5", w5, ParamKind::kWeight);
}

template <typename T>
BasicTensor<T> WaveformerBlock<T>::operator()(const BasicTensor<T>& x, const RunContext& ctx,
                                              const std::string& site) {
  auto y = ops::add(x, swm(x, ctx, site + ".swm"));
  return ops::add(y, mlp(y, ctx, site + ".mlp"));
}

template <typename T>
void WaveformerBlock<T>::visit(const std::string& prefix, const ParamVisitor<T>& f) {
  swm.visit(prefix + ".swm", f);
  mlp.visit(prefix + ".mlp", f);
}

#define SNNHASH_SWM(T)                                                                                     \
  template BasicTensor<T> global_mixer(const BasicTensor<T>&, const BasicTensor<T>&, const RunContext&,    \
                                       const std::string&);                                                \
  template BasicTensor<T> token_mixer(const BasicTensor<T>&, const BasicTensor<T>&, const RunContext&,     \
                                      const std::string&);                                                 \
  template BasicTensor<T> channel_mixer(const BasicTensor<T>&, const BasicTensor<T>&, const RunContext&,   \
                                        const std::string&);                                               \
  template struct Swm<T>;                                                                                  \
  template struct WaveformerBlock<T>;

SNNHASH_INSTANTIATE(SNNHASH_SWM)

}  // namespace snnhash
