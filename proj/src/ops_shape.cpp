#include <algorithm>
#include <numeric>

#include "ops_internal.hpp"
#include "snnhash/ops.hpp"

namespace snnhash::ops {

using internal::broadcast_strides;
using internal::contiguous_strides;
using internal::for_each_index;
using internal::normalize_axis;

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
  // a single -1 extent is inferred
  auto infer = std::find(shape.begin(), shape.end(), std::int64_t{-1});
  if (infer != shape.end()) {
    std::int64_t known = 1;
    for (auto e : shape) known *= (e == -1 ? 1 : e);
    if (known <= 0 || x.size() % known != 0) {
      throw ShapeError("reshape: cannot infer extent of " + shape_str(shape) + " from " +
                       shape_str(x.shape()));
    }
    *infer = x.size() / known;
  }
  if (numel(shape) != x.size()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape) +
                     " changes the element count");
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return detail::make_result<T>(std::move(shape), std::move(out), "reshape", {x},
                                [](std::span<const T> g, const typename GradNode<T>::Inputs& in) {
                                  auto gx = in[0]->grad_buffer();
                                  for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                                });
}

template <typename T>
BasicTensor<T> permute_axes(const BasicTensor<T>& x, const std::vector<int>& perm) {
  const std::size_t r = x.rank();
  if (perm.size() != r) {
    throw ShapeError("permute_axes: permutation of length " + std::to_string(perm.size()) +
                     " for " + shape_str(x.shape()));
  }
  std::vector<int> seen(r, 0);
  for (int p : perm) {
    if (p < 0 || p >= static_cast<int>(r) || seen[static_cast<std::size_t>(p)]++) {
      throw ShapeError("permute_axes: invalid permutation for " + shape_str(x.shape()));
    }
  }
  Shape out_shape(r);
  auto in_strides = contiguous_strides(x.shape());
  std::vector<std::int64_t> gather(r);
  for (std::size_t d = 0; d < r; ++d) {
    out_shape[d] = x.shape()[static_cast<std::size_t>(perm[d])];
    gather[d] = in_strides[static_cast<std::size_t>(perm[d])];
  }
  std::vector<T> out(x.data().size());
  auto dx = x.data();
  std::vector<std::int64_t> zero(r, 0);
  for_each_index(out_shape, gather, zero, [&](std::int64_t o, std::int64_t i, std::int64_t) {
    out[static_cast<std::size_t>(o)] = dx[static_cast<std::size_t>(i)];
  });
  return detail::make_result<T>(
      out_shape, std::move(out), "permute_axes", {x},
      [out_shape, gather](std::span<const T> g, const typename GradNode<T>::Inputs& in) {
        auto gx = in[0]->grad_buffer();
        std::vector<std::int64_t> zero(out_shape.size(), 0);
        for_each_index(out_shape, gather, zero, [&](std::int64_t o, std::int64_t i, std::int64_t) {
          gx[static_cast<std::size_t>(i)] += g[static_cast<std::size_t>(o)];
        });
      });
}

template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const std::size_t r = parts[0].rank();
  axis = normalize_axis(axis, r, "concat");
  const auto ax = static_cast<std::size_t>(axis);
  Shape out_shape = parts[0].shape();
  out_shape[ax] = 0;
  std::vector<std::int64_t> extents;
  for (const auto& p : parts) {
    if (p.rank() != r) throw ShapeError("concat: rank mismatch " + shape_str(p.shape()));
    for (std::size_t d = 0; d < r; ++d) {
      if (d != ax && p.shape()[d] != parts[0].shape()[d]) {
        throw ShapeError("concat: extent mismatch " + shape_str(parts[0].shape()) + " vs " +
                         shape_str(p.shape()) + " on axis " + std::to_string(d));
      }
    }
    extents.push_back(p.shape()[ax]);
    out_shape[ax] += p.shape()[ax];
  }
  std::int64_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < ax; ++d) outer *= out_shape[d];
  for (std::size_t d = ax + 1; d < r; ++d) inner *= out_shape[d];
  const std::int64_t row = out_shape[ax] * inner;
  std::vector<T> out(static_cast<std::size_t>(numel(out_shape)));
  std::int64_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::int64_t block = extents[k] * inner;
    auto src = parts[k].data();
    for (std::int64_t o = 0; o < outer; ++o) {
      std::copy_n(src.begin() + o * block, block, out.begin() + o * row + offset);
    }
    offset += block;
  }
  return detail::make_result<T>(
      out_shape, std::move(out), "concat", parts,
      [extents, outer, inner, row](std::span<const T> g, const typename GradNode<T>::Inputs& in) {
        std::int64_t offset = 0;
        for (std::size_t k = 0; k < in.size(); ++k) {
          const std::int64_t block = extents[k] * inner;
          if (in[k] && in[k]->requires_grad) {
            auto gx = in[k]->grad_buffer();
            for (std::int64_t o = 0; o < outer; ++o) {
              for (std::int64_t j = 0; j < block; ++j) {
                gx[static_cast<std::size_t>(o * block + j)] += g[static_cast<std::size_t>(o * row + offset + j)];
              }
            }
          }
          offset += block;
        }
      });
}

template <typename T>
BasicTensor<T> slice(const BasicTensor<T>& x, int axis, std::int64_t start, std::int64_t length) {
  axis = normalize_axis(axis, x.rank(), "slice");
  const auto ax = static_cast<std::size_t>(axis);
  const std::int64_t extent = x.shape()[ax];
  if (start < 0 || length <= 0 || start + length > extent) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") outside extent " +
                     std::to_string(extent) + " of " + shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[ax] = length;
  std::int64_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < ax; ++d) outer *= out_shape[d];
  for (std::size_t d = ax + 1; d < x.rank(); ++d) inner *= out_shape[d];
  const std::int64_t src_row = extent * inner, dst_row = length * inner, skip = start * inner;
  std::vector<T> out(static_cast<std::size_t>(numel(out_shape)));
  auto dx = x.data();
  for (std::int64_t o = 0; o < outer; ++o) {
    std::copy_n(dx.begin() + o * src_row + skip, dst_row, out.begin() + o * dst_row);
  }
  return detail::make_result<T>(
      out_shape, std::move(out), "slice", {x},
      [outer, src_row, dst_row, skip](std::span<const T> g, const typename GradNode<T>::Inputs& in) {
        auto gx = in[0]->grad_buffer();
        for (std::int64_t o = 0; o < outer; ++o) {
          for (std::int64_t j = 0; j < dst_row; ++j) {
            gx[static_cast<std::size_t>(o * src_row + skip + j)] += g[static_cast<std::size_t>(o * dst_row + j)];
          }
        }
      });
}

namespace {

template <typename T>
BasicTensor<T> reduce_sum(const BasicTensor<T>& x, const std::vector<int>& axes, bool keepdims,
                          double factor, const char* name) {
  const std::size_t r = x.rank();
  std::vector<bool> reduced(r, false);
  for (int a : axes) reduced[static_cast<std::size_t>(normalize_axis(a, r, name))] = true;
  Shape kept(r);
  Shape out_shape;
  for (std::size_t d = 0; d < r; ++d) {
    kept[d] = reduced[d] ? 1 : x.shape()[d];
    if (!reduced[d] || keepdims) out_shape.push_back(kept[d]);
  }
  if (out_shape.empty()) out_shape.push_back(1);
  auto so = broadcast_strides(kept, x.shape());
  std::vector<std::int64_t> zero(r, 0);
  std::vector<T> out(static_cast<std::size_t>(numel(kept)), T(0));
  auto dx = x.data();
  for_each_index(x.shape(), so, zero, [&](std::int64_t i, std::int64_t o, std::int64_t) {
    out[static_cast<std::size_t>(o)] += dx[static_cast<std::size_t>(i)];
  });
  const T f = static_cast<T>(factor);
  if (factor != 1.0) {
    for (auto& v : out) v *= f;
  }
  Shape in_shape = x.shape();
  return detail::make_result<T>(
      out_shape, std::move(out), name, {x},
      [in_shape, so, f](std::span<const T> g, const typename GradNode<T>::Inputs& in) {
        auto gx = in[0]->grad_buffer();
        std::vector<std::int64_t> zero(in_shape.size(), 0);
        for_each_index(in_shape, so, zero, [&](std::int64_t i, std::int64_t o, std::int64_t) {
          gx[static_cast<std::size_t>(i)] += g[static_cast<std::size_t>(o)] * f;
        });
      });
}

}  // namespace

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x, const std::vector<int>& axes, bool keepdims) {
  return reduce_sum(x, axes, keepdims, 1.0, "sum");
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x, const std::vector<int>& axes, bool keepdims) {
  std::int64_t count = 1;
  std::vector<bool> seen(x.rank(), false);
  for (int a : axes) {
    auto d = static_cast<std::size_t>(normalize_axis(a, x.rank(), "mean"));
    if (!seen[d]) count *= x.shape()[d];
    seen[d] = true;
  }
  return reduce_sum(x, axes, keepdims, 1.0 / static_cast<double>(count), "mean");
}

template <typename T>
BasicTensor<T> sum_all(const BasicTensor<T>& x) {
  std::vector<int> axes(x.rank());
  std::iota(axes.begin(), axes.end(), 0);
  return reduce_sum(x, axes, false, 1.0, "sum");
}

#define SNNHASH_SHAPE_OPS(T)                                                                   \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                               \
  template BasicTensor<T> permute_axes(const BasicTensor<T>&, const std::vector<int>&);        \
  template BasicTensor<T> concat(const std::vector<BasicTensor<T>>&, int);                     \
  template BasicTensor<T> slice(const BasicTensor<T>&, int, std::int64_t, std::int64_t);       \
  template BasicTensor<T> sum(const BasicTensor<T>&, const std::vector<int>&, bool);           \
  template BasicTensor<T> mean(const BasicTensor<T>&, const std::vector<int>&, bool);          \
  template BasicTensor<T> sum_all(const BasicTensor<T>&);

SNNHASH_INSTANTIATE(SNNHASH_SHAPE_OPS)

}  // namespace snnhash::ops
