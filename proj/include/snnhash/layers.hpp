#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>

#include "snnhash/lif.hpp"
#include "snnhash/ops.hpp"

namespace snnhash {

enum class ParamKind {
  kWeight,  // trained, weight decay applies
  kNorm,    // trained, no weight decay
  kBuffer,  // running statistics, not trained
};

template <typename T>
using ParamVisitor = std::function<void(const std::string& name, BasicTensor<T>& t, ParamKind kind)>;

// Per-forward settings shared by every layer.
struct RunContext {
  bool train = false;
  LifParams lif;
  // Spiking sites reset their membrane every step (no memory across time).
  bool stateless_neurons = false;
};

// SN(x) over the leading axis, reported under `site`.
template <typename T>
BasicTensor<T> spike(const BasicTensor<T>& x, const RunContext& ctx, const std::string& site);

template <typename T>
struct BatchNorm {
  BasicTensor<T> gamma, beta, running_mean, running_var;

  static BatchNorm make(std::int64_t channels);
  BasicTensor<T> operator()(const BasicTensor<T>& x, const RunContext& ctx);
  void visit(const std::string& prefix, const ParamVisitor<T>& f);
};

// Weight initializers; identical seeds give identical tensors.
template <typename T>
BasicTensor<T> init_uniform(const Shape& shape, double lo, double hi, std::mt19937_64& rng);
template <typename T>
BasicTensor<T> init_normal(const Shape& shape, double stddev, std::mt19937_64& rng);
// Kaiming-style uniform bound sqrt(3 / fan_in) * gain.
template <typename T>
BasicTensor<T> init_fan_in(const Shape& shape, std::int64_t fan_in, double gain, std::mt19937_64& rng);

// Per-position feed-forward on the channel axis:
// BN(Linear(SN(BN(Linear(SN(x)))))).
template <typename T>
struct Mlp {
  BasicTensor<T> w1, w2;  // [hidden, C], [C, hidden]
  BatchNorm<T> bn1, bn2;

  static Mlp make(std::int64_t channels, std::int64_t hidden, std::mt19937_64& rng);
  BasicTensor<T> operator()(const BasicTensor<T>& x, const RunContext& ctx, const std::string& site);
  void visit(const std::string& prefix, const ParamVisitor<T>& f);
};

}  // namespace snnhash
