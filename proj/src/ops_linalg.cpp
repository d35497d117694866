#include <Eigen/Core>
#include <algorithm>
#include <limits>
#include <memory>

#include "ops_internal.hpp"
#include "snnhash/ops.hpp"

namespace snnhash::ops {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapC = Eigen::Map<const RowMat<T>>;
template <typename T>
using Map = Eigen::Map<RowMat<T>>;
template <typename T>
using StridedMapC = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;

std::string dims(const Shape& a, const Shape& b) { return shape_str(a) + " and " + shape_str(b); }

}  // namespace

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() < 2 || b.rank() != a.rank()) {
    throw ShapeError("matmul: incompatible ranks " + dims(a.shape(), b.shape()));
  }
  const std::size_t r = a.rank();
  for (std::size_t d = 0; d + 2 < r; ++d) {
    if (a.shape()[d] != b.shape()[d]) {
      throw ShapeError("matmul: batch extents differ " + dims(a.shape(), b.shape()));
    }
  }
  const std::int64_t m = a.shape()[r - 2], k = a.shape()[r - 1], n = b.shape()[r - 1];
  if (b.shape()[r - 2] != k) {
    throw ShapeError("matmul: inner extents differ " + dims(a.shape(), b.shape()));
  }
  const std::int64_t batch = a.size() / (m * k);
  Shape out_shape = a.shape();
  out_shape[r - 1] = n;
  std::vector<T> out(static_cast<std::size_t>(batch * m * n));
  for (std::int64_t i = 0; i < batch; ++i) {
    Map<T>(out.data() + i * m * n, m, n).noalias() =
        MapC<T>(a.data().data() + i * m * k, m, k) * MapC<T>(b.data().data() + i * k * n, k, n);
  }
  return detail::make_result<T>(
      out_shape, std::move(out), "matmul", {a, b},
      [batch, m, k, n](std::span<const T> g, const typename GradNode<T>::Inputs& in) {
        auto& A = in[0];
        auto& B = in[1];
        for (std::int64_t i = 0; i < batch; ++i) {
          MapC<T> G(g.data() + i * m * n, m, n);
          if (A->requires_grad) {
            Map<T>(A->grad_buffer().data() + i * m * k, m, k).noalias() +=
                G * MapC<T>(B->data.data() + i * k * n, k, n).transpose();
          }
          if (B->requires_grad) {
            Map<T>(B->grad_buffer().data() + i * k * n, k, n).noalias() +=
                MapC<T>(A->data.data() + i * m * k, m, k).transpose() * G;
          }
        }
      });
}

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias) {
  if (weight.rank() != 2 || x.rank() < 1 || x.shape().back() != weight.shape()[1]) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                     shape_str(weight.shape()));
  }
  const std::int64_t in_f = weight.shape()[1], out_f = weight.shape()[0];
  if (bias.defined() && (bias.rank() != 1 || bias.shape()[0] != out_f)) {
    throw ShapeError("linear: bias " + shape_str(bias.shape()) + " does not match weight " +
                     shape_str(weight.shape()));
  }
  const std::int64_t rows = x.size() / in_f;
  Shape out_shape = x.shape();
  out_shape.back() = out_f;
  std::vector<T> out(static_cast<std::size_t>(rows * out_f));
  Map<T> Y(out.data(), rows, out_f);
  Y.noalias() = MapC<T>(x.data().data(), rows, in_f) * MapC<T>(weight.data().data(), out_f, in_f).transpose();
  if (bias.defined()) {
    auto bv = bias.data();
    for (std::int64_t i = 0; i < rows; ++i)
      for (std::int64_t j = 0; j < out_f; ++j) out[static_cast<std::size_t>(i * out_f + j)] += bv[static_cast<std::size_t>(j)];
  }
  return detail::make_result<T>(
      out_shape, std::move(out), "linear", {x, weight, bias},
      [rows, in_f, out_f](std::span<const T> g, const typename GradNode<T>::Inputs& in) {
        auto& X = in[0];
        auto& W = in[1];
        auto& Bb = in[2];
        MapC<T> G(g.data(), rows, out_f);
        if (X->requires_grad) {
          Map<T>(X->grad_buffer().data(), rows, in_f).noalias() += G * MapC<T>(W->data.data(), out_f, in_f);
        }
        if (W->requires_grad) {
          Map<T>(W->grad_buffer().data(), out_f, in_f).noalias() +=
              G.transpose() * MapC<T>(X->data.data(), rows, in_f);
        }
        if (Bb && Bb->requires_grad) {
          auto gb = Bb->grad_buffer();
          for (std::int64_t i = 0; i < rows; ++i)
            for (std::int64_t j = 0; j < out_f; ++j) gb[static_cast<std::size_t>(j)] += g[static_cast<std::size_t>(i * out_f + j)];
        }
      });
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight, int padding) {
  if (x.rank() != 4 || weight.rank() != 4) {
    throw ShapeError("conv2d: expected [N,H,W,Cin] input and [Cout,k,k,Cin] weight, got " +
                     dims(x.shape(), weight.shape()));
  }
  const std::int64_t N = x.shape()[0], H = x.shape()[1], W = x.shape()[2], Cin = x.shape()[3];
  const std::int64_t Cout = weight.shape()[0], kh = weight.shape()[1], kw = weight.shape()[2];
  if (kh != kw || (kh != 1 && kh != 3) || weight.shape()[3] != Cin) {
    throw ShapeError("conv2d: kernel " + shape_str(weight.shape()) + " incompatible with input " +
                     shape_str(x.shape()) + " (1x1 or 3x3 only)");
  }
  const std::int64_t Ho = H + 2 * padding - kh + 1, Wo = W + 2 * padding - kw + 1;
  if (padding < 0 || Ho <= 0 || Wo <= 0) {
    throw ShapeError("conv2d: padding " + std::to_string(padding) + " invalid for " + shape_str(x.shape()));
  }
  const std::int64_t K = kh * kw * Cin;
  const std::int64_t rows = N * Ho * Wo;
  // im2col, column order (ky, kx, c) matches the weight layout
  auto col = std::make_shared<std::vector<T>>(static_cast<std::size_t>(rows * K), T(0));
  auto dx = x.data();
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t oy = 0; oy < Ho; ++oy)
      for (std::int64_t ox = 0; ox < Wo; ++ox) {
        T* dst = col->data() + ((n * Ho + oy) * Wo + ox) * K;
        for (std::int64_t ky = 0; ky < kh; ++ky) {
          const std::int64_t iy = oy + ky - padding;
          if (iy < 0 || iy >= H) continue;
          for (std::int64_t kx = 0; kx < kw; ++kx) {
            const std::int64_t ix = ox + kx - padding;
            if (ix < 0 || ix >= W) continue;
            std::copy_n(dx.begin() + ((n * H + iy) * W + ix) * Cin, Cin, dst + (ky * kw + kx) * Cin);
          }
        }
      }
  std::vector<T> out(static_cast<std::size_t>(rows * Cout));
  Map<T>(out.data(), rows, Cout).noalias() =
      MapC<T>(col->data(), rows, K) * MapC<T>(weight.data().data(), Cout, K).transpose();
  return detail::make_result<T>(
      Shape{N, Ho, Wo, Cout}, std::move(out), "conv2d", {x, weight},
      [col, N, H, W, Cin, Cout, kh, kw, Ho, Wo, K, rows, padding](std::span<const T> g,
                                                                  const typename GradNode<T>::Inputs& in) {
        auto& X = in[0];
        auto& Wt = in[1];
        MapC<T> G(g.data(), rows, Cout);
        if (Wt->requires_grad) {
          Map<T>(Wt->grad_buffer().data(), Cout, K).noalias() += G.transpose() * MapC<T>(col->data(), rows, K);
        }
        if (X->requires_grad) {
          RowMat<T> dcol = G * MapC<T>(Wt->data.data(), Cout, K);
          auto gx = X->grad_buffer();
          for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t oy = 0; oy < Ho; ++oy)
              for (std::int64_t ox = 0; ox < Wo; ++ox) {
                const T* src = dcol.data() + ((n * Ho + oy) * Wo + ox) * K;
                for (std::int64_t ky = 0; ky < kh; ++ky) {
                  const std::int64_t iy = oy + ky - padding;
                  if (iy < 0 || iy >= H) continue;
                  for (std::int64_t kx = 0; kx < kw; ++kx) {
                    const std::int64_t ix = ox + kx - padding;
                    if (ix < 0 || ix >= W) continue;
                    T* dst = gx.data() + ((n * H + iy) * W + ix) * Cin;
                    const T* s = src + (ky * kw + kx) * Cin;
                    for (std::int64_t c = 0; c < Cin; ++c) dst[c] += s[c];
                  }
                }
              }
        }
      });
}

template <typename T>
BasicTensor<T> maxpool2d(const BasicTensor<T>& x) {
  if (x.rank() != 4) throw ShapeError("maxpool2d: expected [N,H,W,C], got " + shape_str(x.shape()));
  const std::int64_t N = x.shape()[0], H = x.shape()[1], W = x.shape()[2], C = x.shape()[3];
  const std::int64_t Ho = (H - 1) / 2 + 1, Wo = (W - 1) / 2 + 1;
  auto argmax = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(N * Ho * Wo * C));
  std::vector<T> out(argmax->size());
  auto dx = x.data();
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t oy = 0; oy < Ho; ++oy)
      for (std::int64_t ox = 0; ox < Wo; ++ox)
        for (std::int64_t c = 0; c < C; ++c) {
          T best = -std::numeric_limits<T>::infinity();
          std::int64_t arg = -1;
          for (std::int64_t ky = 0; ky < 3; ++ky) {
            const std::int64_t iy = 2 * oy + ky - 1;
            if (iy < 0 || iy >= H) continue;
            for (std::int64_t kx = 0; kx < 3; ++kx) {
              const std::int64_t ix = 2 * ox + kx - 1;
              if (ix < 0 || ix >= W) continue;
              const std::int64_t idx = ((n * H + iy) * W + ix) * C + c;
              if (arg < 0 || dx[static_cast<std::size_t>(idx)] > best) {
                best = dx[static_cast<std::size_t>(idx)];
                arg = idx;
              }
            }
          }
          const auto o = static_cast<std::size_t>(((n * Ho + oy) * Wo + ox) * C + c);
          out[o] = best;
          (*argmax)[o] = arg;
        }
  return detail::make_result<T>(Shape{N, Ho, Wo, C}, std::move(out), "maxpool2d", {x},
                                [argmax](std::span<const T> g, const typename GradNode<T>::Inputs& in) {
                                  auto gx = in[0]->grad_buffer();
                                  for (std::size_t o = 0; o < g.size(); ++o)
                                    gx[static_cast<std::size_t>((*argmax)[o])] += g[o];
                                });
}

template <typename T>
BasicTensor<T> grouped_contraction(const BasicTensor<T>& x, const BasicTensor<T>& weight) {
  if (weight.rank() != 3 || x.rank() < 1) {
    throw ShapeError("grouped_contraction: expected weight [G,D,K], got " + shape_str(weight.shape()));
  }
  const std::int64_t G = weight.shape()[0], D = weight.shape()[1], K = weight.shape()[2];
  if (x.shape().back() != G * D) {
    throw ShapeError("grouped_contraction: channel extent " + std::to_string(x.shape().back()) +
                     " is not groups*dim = " + std::to_string(G) + "*" + std::to_string(D));
  }
  const std::int64_t rows = x.size() / (G * D);
  Shape out_shape = x.shape();
  out_shape.back() = G * K;
  std::vector<T> out(static_cast<std::size_t>(rows * G * K));
  for (std::int64_t g = 0; g < G; ++g) {
    StridedMap<T>(out.data() + g * K, rows, K, Eigen::OuterStride<>(G * K)).noalias() =
        StridedMapC<T>(x.data().data() + g * D, rows, D, Eigen::OuterStride<>(G * D)) *
        MapC<T>(weight.data().data() + g * D * K, D, K);
  }
  return detail::make_result<T>(
      out_shape, std::move(out), "grouped_contraction", {x, weight},
      [rows, G, D, K](std::span<const T> gout, const typename GradNode<T>::Inputs& in) {
        auto& X = in[0];
        auto& Wt = in[1];
        for (std::int64_t g = 0; g < G; ++g) {
          StridedMapC<T> Gg(gout.data() + g * K, rows, K, Eigen::OuterStride<>(G * K));
          if (X->requires_grad) {
            StridedMap<T>(X->grad_buffer().data() + g * D, rows, D, Eigen::OuterStride<>(G * D)).noalias() +=
                Gg * MapC<T>(Wt->data.data() + g * D * K, D, K).transpose();
          }
          if (Wt->requires_grad) {
            Map<T>(Wt->grad_buffer().data() + g * D * K, D, K).noalias() +=
                StridedMapC<T>(X->data.data() + g * D, rows, D, Eigen::OuterStride<>(G * D)).transpose() * Gg;
          }
        }
      });
}

#define SNNHASH_LINALG_OPS(T)                                                                     \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                   \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, int);              \
  template BasicTensor<T> maxpool2d(const BasicTensor<T>&);                                       \
  template BasicTensor<T> grouped_contraction(const BasicTensor<T>&, const BasicTensor<T>&);

SNNHASH_INSTANTIATE(SNNHASH_LINALG_OPS)

}  // namespace snnhash::ops
