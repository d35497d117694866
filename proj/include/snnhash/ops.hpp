#pragma once

#include <cstdint>
#include <vector>

#include "snnhash/tensor.hpp"

// The closed primitive catalog. Every layer in the library is a composition of
// these functions; each one records its own backward rule.
//
// Layout conventions: images are channels-last ([N, H, W, C]); affine maps and
// batchnorm act on the last axis.
namespace snnhash::ops {

// Elementwise binary ops broadcast with numpy rules.
template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> subtract(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> hadamard_multiply(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> scalar_scale(const BasicTensor<T>& x, double factor);

// [..., m, k] x [..., k, n]; leading batch extents must match exactly.
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);
// x [..., in], weight [out, in], optional bias [out] -> [..., out].
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias = {});
// x [N, H, W, Cin], weight [Cout, k, k, Cin] with k in {1, 3}; stride 1,
// symmetric zero padding.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight, int padding);
// 3x3 window, stride 2, padding 1 over [N, H, W, C].
template <typename T>
BasicTensor<T> maxpool2d(const BasicTensor<T>& x);

struct BatchNormOptions {
  bool train = true;
  double momentum = 0.1;
  double eps = 1e-5;
};

// Normalizes the last axis. In train mode batch statistics are used and the
// running buffers are updated in place (unbiased variance, like the common
// frameworks).
template <typename T>
BasicTensor<T> batchnorm(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                         const BasicTensor<T>& beta, BasicTensor<T>& running_mean,
                         BasicTensor<T>& running_var, const BatchNormOptions& opts);

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape);
template <typename T>
BasicTensor<T> permute_axes(const BasicTensor<T>& x, const std::vector<int>& perm);
template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, int axis);
template <typename T>
BasicTensor<T> slice(const BasicTensor<T>& x, int axis, std::int64_t start, std::int64_t length);
template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x, const std::vector<int>& axes, bool keepdims = false);
template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x, const std::vector<int>& axes, bool keepdims = false);
// Sum of every entry, shape [1].
template <typename T>
BasicTensor<T> sum_all(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> tanh(const BasicTensor<T>& x);
// log(1 + e^x) without overflow for large |x|
template <typename T>
BasicTensor<T> softplus(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> log(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> exp(const BasicTensor<T>& x);

// x [..., G*D], weight [G, D, K] -> [..., G*K]:
//   out[..., g, k] = sum_d x[..., g, d] * weight[g, d, k]
template <typename T>
BasicTensor<T> grouped_contraction(const BasicTensor<T>& x, const BasicTensor<T>& weight);

struct SurrogateSpec {
  double v_th = 1.0;
  double width = 2.0;  // arctan slope a
};

// Spike emission [h >= v_th] with the arctan surrogate derivative
// (a/2) / (1 + (pi a (h - v_th) / 2)^2) as its backward rule. Under
// SurrogateForwardGuard the forward value is the smooth surrogate itself,
// 1/pi * atan(pi a (h - v_th) / 2) + 1/2, which makes spiking programs
// checkable by finite differences.
template <typename T>
BasicTensor<T> heaviside_with_surrogate(const BasicTensor<T>& h, const SurrogateSpec& spec);

double surrogate_grad(double h, const SurrogateSpec& spec);
double surrogate_value(double h, const SurrogateSpec& spec);

bool surrogate_forward_enabled();

class SurrogateForwardGuard {
 public:
  SurrogateForwardGuard();
  ~SurrogateForwardGuard();
  SurrogateForwardGuard(const SurrogateForwardGuard&) = delete;
  SurrogateForwardGuard& operator=(const SurrogateForwardGuard&) = delete;

 private:
  bool previous_;
};

// Broadcast result shape or ShapeError naming `op`.
Shape broadcast_shapes(const Shape& a, const Shape& b, const char* op);

}  // namespace snnhash::ops
