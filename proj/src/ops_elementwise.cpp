#include <algorithm>
#include <cmath>
#include <numbers>

#include "ops_internal.hpp"
#include "snnhash/ops.hpp"

namespace snnhash::ops {

using internal::broadcast_strides;
using internal::for_each_index;

Shape broadcast_shapes(const Shape& a, const Shape& b, const char* op) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    const std::int64_t ea = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::int64_t eb = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (ea != eb && ea != 1 && eb != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                       shape_str(b));
    }
    out[i] = std::max(ea, eb);
  }
  return out;
}

namespace {

enum class BinaryKind { kAdd, kSub, kMul };

const char* binary_name(BinaryKind k) {
  switch (k) {
    case BinaryKind::kAdd: return "add";
    case BinaryKind::kSub: return "subtract";
    case BinaryKind::kMul: return "hadamard_multiply";
  }
  return "?";
}

template <typename T>
T apply(BinaryKind k, T x, T y) {
  switch (k) {
    case BinaryKind::kAdd: return x + y;
    case BinaryKind::kSub: return x - y;
    case BinaryKind::kMul: return x * y;
  }
  return T(0);
}

// Accumulates d(out)/d(input) * gout into `gin`, reducing over axes where the
// input was broadcast. `other` (may be empty) multiplies the contribution.
template <typename T>
void accumulate_reduced(std::span<const T> gout, const Shape& out_shape, const Shape& in_shape,
                        std::span<T> gin, std::span<const T> other, const Shape& other_shape,
                        T sign) {
  if (in_shape == out_shape && (other.empty() || other_shape == out_shape)) {
    if (other.empty()) {
      for (std::size_t i = 0; i < gout.size(); ++i) gin[i] += sign * gout[i];
    } else {
      for (std::size_t i = 0; i < gout.size(); ++i) gin[i] += gout[i] * other[i];
    }
    return;
  }
  auto si = broadcast_strides(in_shape, out_shape);
  if (other.empty()) {
    std::vector<std::int64_t> zero(out_shape.size(), 0);
    for_each_index(out_shape, si, zero, [&](std::int64_t o, std::int64_t a, std::int64_t) {
      gin[static_cast<std::size_t>(a)] += sign * gout[static_cast<std::size_t>(o)];
    });
  } else {
    auto so = broadcast_strides(other_shape, out_shape);
    for_each_index(out_shape, si, so, [&](std::int64_t o, std::int64_t a, std::int64_t b) {
      gin[static_cast<std::size_t>(a)] += gout[static_cast<std::size_t>(o)] * other[static_cast<std::size_t>(b)];
    });
  }
}

template <typename T>
BasicTensor<T> binary(BinaryKind kind, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const char* name = binary_name(kind);
  Shape out_shape = broadcast_shapes(a.shape(), b.shape(), name);
  const auto n = static_cast<std::size_t>(numel(out_shape));
  std::vector<T> out(n);
  auto da = a.data();
  auto db = b.data();
  if (a.shape() == out_shape && b.shape() == out_shape) {
    for (std::size_t i = 0; i < n; ++i) out[i] = apply(kind, da[i], db[i]);
  } else if (b.size() == 1 && a.shape() == out_shape) {
    const T y = db[0];
    for (std::size_t i = 0; i < n; ++i) out[i] = apply(kind, da[i], y);
  } else {
    auto sa = broadcast_strides(a.shape(), out_shape);
    auto sb = broadcast_strides(b.shape(), out_shape);
    for_each_index(out_shape, sa, sb, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
      out[static_cast<std::size_t>(o)] =
          apply(kind, da[static_cast<std::size_t>(ia)], db[static_cast<std::size_t>(ib)]);
    });
  }
  return detail::make_result<T>(
      out_shape, std::move(out), name, {a, b},
      [kind, out_shape](std::span<const T> g, const typename GradNode<T>::Inputs& in) {
        auto& A = in[0];
        auto& B = in[1];
        if (kind == BinaryKind::kMul) {
          if (A && A->requires_grad)
            accumulate_reduced<T>(g, out_shape, A->shape, A->grad_buffer(), B->data, B->shape, T(1));
          if (B && B->requires_grad)
            accumulate_reduced<T>(g, out_shape, B->shape, B->grad_buffer(), A->data, A->shape, T(1));
          return;
        }
        const T sign_b = kind == BinaryKind::kSub ? T(-1) : T(1);
        if (A && A->requires_grad)
          accumulate_reduced<T>(g, out_shape, A->shape, A->grad_buffer(), {}, {}, T(1));
        if (B && B->requires_grad)
          accumulate_reduced<T>(g, out_shape, B->shape, B->grad_buffer(), {}, {}, sign_b);
      });
}

enum class UnaryKind { kSigmoid, kTanh, kLog, kExp, kSoftplus };

template <typename T>
BasicTensor<T> unary(UnaryKind kind, const char* name, const BasicTensor<T>& x) {
  auto dx = x.data();
  std::vector<T> out(dx.size());
  for (std::size_t i = 0; i < dx.size(); ++i) {
    const T v = dx[i];
    switch (kind) {
      case UnaryKind::kSigmoid: out[i] = T(1) / (T(1) + std::exp(-v)); break;
      case UnaryKind::kTanh: out[i] = std::tanh(v); break;
      case UnaryKind::kLog:
        if (!(v > T(0))) {
          throw DomainError("log: non-positive input " + std::to_string(v) + " at index " +
                            std::to_string(i));
        }
        out[i] = std::log(v);
        break;
      case UnaryKind::kExp: out[i] = std::exp(v); break;
      case UnaryKind::kSoftplus: out[i] = std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v))); break;
    }
  }
  return detail::make_result<T>(
      x.shape(), std::move(out), name, {x},
      [kind](std::span<const T> g, const typename GradNode<T>::Inputs& in) {
        auto& X = in[0];
        auto gx = X->grad_buffer();
        const auto& xv = X->data;
        for (std::size_t i = 0; i < g.size(); ++i) {
          const T v = xv[i];
          T d = 0;
          switch (kind) {
            case UnaryKind::kSigmoid: {
              const T s = T(1) / (T(1) + std::exp(-v));
              d = s * (T(1) - s);
              break;
            }
            case UnaryKind::kTanh: {
              const T t = std::tanh(v);
              d = T(1) - t * t;
              break;
            }
            case UnaryKind::kLog: d = T(1) / v; break;
            case UnaryKind::kExp: d = std::exp(v); break;
            case UnaryKind::kSoftplus: d = T(1) / (T(1) + std::exp(-v)); break;
          }
          gx[i] += g[i] * d;
        }
      });
}

thread_local bool g_surrogate_forward = false;

}  // namespace

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(BinaryKind::kAdd, a, b);
}
template <typename T>
BasicTensor<T> subtract(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(BinaryKind::kSub, a, b);
}
template <typename T>
BasicTensor<T> hadamard_multiply(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(BinaryKind::kMul, a, b);
}

template <typename T>
BasicTensor<T> scalar_scale(const BasicTensor<T>& x, double factor) {
  const T f = static_cast<T>(factor);
  auto dx = x.data();
  std::vector<T> out(dx.size());
  for (std::size_t i = 0; i < dx.size(); ++i) out[i] = dx[i] * f;
  return detail::make_result<T>(x.shape(), std::move(out), "scalar_scale", {x},
                                [f](std::span<const T> g, const typename GradNode<T>::Inputs& in) {
                                  auto gx = in[0]->grad_buffer();
                                  for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * f;
                                });
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
  return unary(UnaryKind::kSigmoid, "sigmoid", x);
}
template <typename T>
BasicTensor<T> tanh(const BasicTensor<T>& x) {
  return unary(UnaryKind::kTanh, "tanh", x);
}
template <typename T>
BasicTensor<T> softplus(const BasicTensor<T>& x) {
  return unary(UnaryKind::kSoftplus, "softplus", x);
}
template <typename T>
BasicTensor<T> log(const BasicTensor<T>& x) {
  return unary(UnaryKind::kLog, "log", x);
}
template <typename T>
BasicTensor<T> exp(const BasicTensor<T>& x) {
  return unary(UnaryKind::kExp, "exp", x);
}

double surrogate_grad(double h, const SurrogateSpec& spec) {
  const double u = std::numbers::pi * spec.width * (h - spec.v_th) / 2.0;
  return (spec.width / 2.0) / (1.0 + u * u);
}

double surrogate_value(double h, const SurrogateSpec& spec) {
  const double u = std::numbers::pi * spec.width * (h - spec.v_th) / 2.0;
  return std::atan(u) / std::numbers::pi + 0.5;
}

bool surrogate_forward_enabled() { return g_surrogate_forward; }

SurrogateForwardGuard::SurrogateForwardGuard() : previous_(g_surrogate_forward) {
  g_surrogate_forward = true;
}
SurrogateForwardGuard::~SurrogateForwardGuard() { g_surrogate_forward = previous_; }

template <typename T>
BasicTensor<T> heaviside_with_surrogate(const BasicTensor<T>& h, const SurrogateSpec& spec) {
  auto dh = h.data();
  std::vector<T> out(dh.size());
  const T th = static_cast<T>(spec.v_th);
  if (g_surrogate_forward) {
    for (std::size_t i = 0; i < dh.size(); ++i)
      out[i] = static_cast<T>(surrogate_value(static_cast<double>(dh[i]), spec));
  } else {
    for (std::size_t i = 0; i < dh.size(); ++i) out[i] = dh[i] >= th ? T(1) : T(0);
  }
  return detail::make_result<T>(
      h.shape(), std::move(out), "heaviside_with_surrogate", {h},
      [spec](std::span<const T> g, const typename GradNode<T>::Inputs& in) {
        auto gx = in[0]->grad_buffer();
        const auto& hv = in[0]->data;
        for (std::size_t i = 0; i < g.size(); ++i) {
          gx[i] += g[i] * static_cast<T>(surrogate_grad(static_cast<double>(hv[i]), spec));
        }
      });
}

#define SNNHASH_ELEMENTWISE(T)                                                          \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);           \
  template BasicTensor<T> subtract(const BasicTensor<T>&, const BasicTensor<T>&);      \
  template BasicTensor<T> hadamard_multiply(const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> scalar_scale(const BasicTensor<T>&, double);                 \
  template BasicTensor<T> sigmoid(const BasicTensor<T>&);                              \
  template BasicTensor<T> tanh(const BasicTensor<T>&);                                 \
  template BasicTensor<T> softplus(const BasicTensor<T>&);                             \
  template BasicTensor<T> log(const BasicTensor<T>&);                                  \
  template BasicTensor<T> exp(const BasicTensor<T>&);                                  \
  template BasicTensor<T> heaviside_with_surrogate(const BasicTensor<T>&, const SurrogateSpec&);

SNNHASH_INSTANTIATE(SNNHASH_ELEMENTWISE)

}  // namespace snnhash::ops
