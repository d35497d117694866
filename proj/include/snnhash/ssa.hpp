#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "snnhash/layers.hpp"

// Spiking self-attention over spatial tokens, per time step and head.
// Activations are [T, B, H, W, C].
namespace snnhash {

template <typename T>
struct QkvSpikes {
  BasicTensor<T> q, k, v;  // [T, B, heads, tokens, d_head], binary
};

// SN(Q K^T V * s) per time step and head, spikes over the leading axis.
// q, k, v: [T, ..., tokens, d].
template <typename T>
BasicTensor<T> spiking_attention(const BasicTensor<T>& q, const BasicTensor<T>& k, const BasicTensor<T>& v,
                                 double scale, const RunContext& ctx, const std::string& site);

template <typename T>
struct Ssa {
  std::int64_t heads = 1;
  double scale = 0.125;
  BasicTensor<T> wq, wk, wv, wo;  // [C, C] 1x1 projections
  BatchNorm<T> bq, bk, bv, bo;

  static Ssa make(std::int64_t channels, std::int64_t heads, double scale, std::mt19937_64& rng);
  // x is the block input; the block-input SN is applied here.
  QkvSpikes<T> qkv_project(const BasicTensor<T>& x, const RunContext& ctx, const std::string& site);
  // BN(Conv1x1(SA(Q, K, V))), shaped like x.
  BasicTensor<T> operator()(const BasicTensor<T>& x, const RunContext& ctx, const std::string& site);
  void visit(const std::string& prefix, const ParamVisitor<T>& f);
};

// x + SSA(x), then x + MLP(x).
template <typename T>
struct TransformerBlock {
  Ssa<T> ssa;
  Mlp<T> mlp;

  BasicTensor<T> operator()(const BasicTensor<T>& x, const RunContext& ctx, const std::string& site);
  void visit(const std::string& prefix, const ParamVisitor<T>& f);
};

}  // namespace snnhash
