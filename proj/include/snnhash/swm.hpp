#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "snnhash/layers.hpp"

// Spiking wave mixer. Activations are [T, B, H, W, C]; the wavelet runs over
// (T, H, W) in the 3D variant and over (H, W) per time step in the 2D one.
namespace snnhash {

// SN(low) * w1, with w1 already laid out to broadcast against `low`.
template <typename T>
BasicTensor<T> global_mixer(const BasicTensor<T>& low, const BasicTensor<T>& w1, const RunContext& ctx,
                            const std::string& site);

// SN(bands) * w, broadcasting w over batch and channels.
template <typename T>
BasicTensor<T> token_mixer(const BasicTensor<T>& bands, const BasicTensor<T>& w, const RunContext& ctx,
                           const std::string& site);

// out[..., g, k] = sum_d SN(x)[..., g, d] w[g, d, k]
template <typename T>
BasicTensor<T> channel_mixer(const BasicTensor<T>& x, const BasicTensor<T>& w, const RunContext& ctx,
                             const std::string& site);

template <typename T>
struct Swm {
  int dims = 3;
  std::int64_t groups = 1;
  // Neuron settings for every spiking site inside the mixer. Haar
  // coefficients of binary spikes are bounded by sqrt2 (low) and 1/sqrt2
  // (high), so the threshold sits well below the network default.
  LifParams lif = default_lif();
  // 3D: w1 [C, T/4, H/4, W/4], w2 [7, T/2, H/2, W/2], w3 [7, T/4, H/4, W/4]
  // 2D: w1 [C, H/4, W/4],      w2 [3, H/2, W/2],      w3 [3, H/4, W/4]
  // w4, w5 [groups, C/groups, C/groups]
  BasicTensor<T> w1, w2, w3, w4, w5;

  static Swm make(std::int64_t channels, std::int64_t steps, std::int64_t height, std::int64_t width,
                  std::int64_t groups, int dims, std::mt19937_64& rng);
  BasicTensor<T> operator()(const BasicTensor<T>& x, const RunContext& ctx, const std::string& site);
  void visit(const std::string& prefix, const ParamVisitor<T>& f);

  static LifParams default_lif() {
    LifParams p;
    p.v_th = 0.25;
    return p;
  }
};

// x + SWM(x), then x + MLP(x).
template <typename T>
struct WaveformerBlock {
  Swm<T> swm;
  Mlp<T> mlp;

  BasicTensor<T> operator()(const BasicTensor<T>& x, const RunContext& ctx, const std::string& site);
  void visit(const std::string& prefix, const ParamVisitor<T>& f);
};

}  // namespace snnhash
