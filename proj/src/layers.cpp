#include "snnhash/layers.hpp"

#include <cmath>

#include "ops_internal.hpp"

namespace snnhash {

template <typename T>
BasicTensor<T> spike(const BasicTensor<T>& x, const RunContext& ctx, const std::string& site) {
  if (ctx.stateless_neurons) return lif_stateless(x, ctx.lif, site);
  return lif_sequence(x, ctx.lif, false, site).S;
}

template <typename T>
BatchNorm<T> BatchNorm<T>::make(std::int64_t channels) {
  return {BasicTensor<T>::full({channels}, T(1), true), BasicTensor<T>::zeros({channels}, true),
          BasicTensor<T>::zeros({channels}), BasicTensor<T>::full({channels}, T(1))};
}

template <typename T>
BasicTensor<T> BatchNorm<T>::operator()(const BasicTensor<T>& x, const RunContext& ctx) {
  ops::BatchNormOptions o;
  o.train = ctx.train;
  return ops::batchnorm(x, gamma, beta, running_mean, running_var, o);
}

template <typename T>
void BatchNorm<T>::visit(const std::string& prefix, const ParamVisitor<T>& f) {
  f(prefix + ".gamma", gamma, ParamKind::kNorm);
  f(prefix + ".beta", beta, ParamKind::kNorm);
  f(prefix + ".running_mean", running_mean, ParamKind::kBuffer);
  f(prefix + ".running_var", running_var, ParamKind::kBuffer);
}

template <typename T>
BasicTensor<T> init_uniform(const Shape& shape, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<T> v(static_cast<std::size_t>(numel(shape)));
  for (auto& x : v) x = static_cast<T>(d(rng));
  return BasicTensor<T>(shape, std::move(v), true);
}

template <typename T>
BasicTensor<T> init_normal(const Shape& shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, stddev);
  std::vector<T> v(static_cast<std::size_t>(numel(shape)));
  for (auto& x : v) x = static_cast<T>(d(rng));
  return BasicTensor<T>(shape, std::move(v), true);
}

template <typename T>
BasicTensor<T> init_fan_in(const Shape& shape, std::int64_t fan_in, double gain, std::mt19937_64& rng) {
  const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
  return init_uniform<T>(shape, -bound, bound, rng);
}

template <typename T>
Mlp<T> Mlp<T>::make(std::int64_t channels, std::int64_t hidden, std::mt19937_64& rng) {
  Mlp m;
  m.w1 = init_fan_in<T>({hidden, channels}, channels, 1.0, rng);
  m.w2 = init_fan_in<T>({channels, hidden}, hidden, 1.0, rng);
  m.bn1 = BatchNorm<T>::make(hidden);
  m.bn2 = BatchNorm<T>::make(channels);
  return m;
}

template <typename T>
BasicTensor<T> Mlp<T>::operator()(const BasicTensor<T>& x, const RunContext& ctx, const std::string& site) {
  auto h = bn1(ops::linear(spike(x, ctx, site + ".sn1"), w1), ctx);
  return bn2(ops::linear(spike(h, ctx, site + ".sn2"), w2), ctx);
}

template <typename T>
void Mlp<T>::visit(const std::string& prefix, const ParamVisitor<T>& f) {
  f(prefix + ".fc1.weight", w1, ParamKind::kWeight);
  bn1.visit(prefix + ".bn1", f);
  f(prefix + ".fc2.weight", w2, ParamKind::kWeight);
  bn2.visit(prefix + ".bn2", f);
}

#define SNNHASH_LAYERS(T)                                                                            \
  template BasicTensor<T> spike(const BasicTensor<T>&, const RunContext&, const std::string&);       \
  template struct BatchNorm<T>;                                                                      \
  template struct Mlp<T>;                                                                            \
  template BasicTensor<T> init_uniform<T>(const Shape&, double, double, std::mt19937_64&);           \
  template BasicTensor<T> init_normal<T>(const Shape&, double, std::mt19937_64&);                    \
  template BasicTensor<T> init_fan_in<T>(const Shape&, std::int64_t, double, std::mt19937_64&);

SNNHASH_INSTANTIATE(SNNHASH_LAYERS)

}  // namespace snnhash
