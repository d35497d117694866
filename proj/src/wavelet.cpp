#include "snnhash/wavelet.hpp"

#include <cmath>

#include "ops_internal.hpp"
#include "snnhash/ops.hpp"

namespace snnhash::wavelet {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

// [outer, n, inner] view extents around `axis`
void split_extents(const Shape& s, int axis, std::int64_t& outer, std::int64_t& inner) {
  outer = 1;
  inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s[static_cast<std::size_t>(d)];
  for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < s.size(); ++d) inner *= s[d];
}

}  // namespace

template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> dwt1d_along(const BasicTensor<T>& x, int axis) {
  axis = ops::internal::normalize_axis(axis, x.rank(), "dwt1d_along");
  const std::int64_t n = x.shape()[static_cast<std::size_t>(axis)];
  if (n < 2 || n % 2 != 0) {
    throw ShapeError("dwt1d_along: extent " + std::to_string(n) + " on axis " + std::to_string(axis) +
                     " of " + shape_str(x.shape()) + " must be even and >= 2");
  }
  std::int64_t outer, inner;
  split_extents(x.shape(), axis, outer, inner);
  auto v = ops::reshape(x, {outer, n / 2, 2, inner});
  auto even = ops::slice(v, 2, 0, 1);
  auto odd = ops::slice(v, 2, 1, 1);
  Shape half = x.shape();
  half[static_cast<std::size_t>(axis)] = n / 2;
  auto a = ops::reshape(ops::scalar_scale(ops::add(even, odd), kInvSqrt2), half);
  auto d = ops::reshape(ops::scalar_scale(ops::subtract(even, odd), kInvSqrt2), half);
  return {a, d};
}

template <typename T>
BasicTensor<T> idwt1d_along(const BasicTensor<T>& a, const BasicTensor<T>& d, int axis) {
  if (a.shape() != d.shape()) {
    throw ShapeError("idwt1d_along: band shapes differ " + shape_str(a.shape()) + " vs " + shape_str(d.shape()));
  }
  axis = ops::internal::normalize_axis(axis, a.rank(), "idwt1d_along");
  const std::int64_t n = a.shape()[static_cast<std::size_t>(axis)];
  std::int64_t outer, inner;
  split_extents(a.shape(), axis, outer, inner);
  auto av = ops::reshape(a, {outer, n, 1, inner});
  auto dv = ops::reshape(d, {outer, n, 1, inner});
  auto even = ops::scalar_scale(ops::add(av, dv), kInvSqrt2);
  auto odd = ops::scalar_scale(ops::subtract(av, dv), kInvSqrt2);
  Shape full = a.shape();
  full[static_cast<std::size_t>(axis)] = 2 * n;
  return ops::reshape(ops::concat(std::vector<BasicTensor<T>>{even, odd}, 2), full);
}

template <typename T>
std::vector<BasicTensor<T>> dwt_nd(const BasicTensor<T>& x, const std::vector<int>& axes,
                                   const Interleave<T>& interleave) {
  std::vector<BasicTensor<T>> bands{x};
  for (int axis : axes) {
    std::vector<BasicTensor<T>> next;
    next.reserve(bands.size() * 2);
    for (const auto& b : bands) {
      auto [a, d] = dwt1d_along(interleave ? interleave(b) : b, axis);
      next.push_back(a);
      next.push_back(d);
    }
    bands = std::move(next);
  }
  return bands;
}

template <typename T>
BasicTensor<T> idwt_nd(const std::vector<BasicTensor<T>>& bands, const std::vector<int>& axes) {
  if (bands.size() != (std::size_t{1} << axes.size())) {
    throw ShapeError("idwt_nd: expected " + std::to_string(std::size_t{1} << axes.size()) + " bands, got " +
                     std::to_string(bands.size()));
  }
  for (const auto& b : bands) {
    if (b.shape() != bands[0].shape()) {
      throw ShapeError("idwt_nd: inconsistent band shapes " + shape_str(bands[0].shape()) + " vs " +
                       shape_str(b.shape()));
    }
  }
  std::vector<BasicTensor<T>> cur = bands;
  for (auto it = axes.rbegin(); it != axes.rend(); ++it) {
    std::vector<BasicTensor<T>> prev;
    prev.reserve(cur.size() / 2);
    for (std::size_t i = 0; i < cur.size(); i += 2) prev.push_back(idwt1d_along(cur[i], cur[i + 1], *it));
    cur = std::move(prev);
  }
  return cur[0];
}

template <typename T>
Pyramid<T> multilevel_dwt(const BasicTensor<T>& x, const std::vector<int>& axes, int levels,
                          const Interleave<T>& interleave) {
  if (levels < 1) throw std::invalid_argument("multilevel_dwt: levels must be >= 1");
  const std::int64_t factor = std::int64_t{1} << levels;
  for (int axis : axes) {
    const auto ax = static_cast<std::size_t>(ops::internal::normalize_axis(axis, x.rank(), "multilevel_dwt"));
    if (x.shape()[ax] % factor != 0) {
      throw ShapeError("multilevel_dwt: extent " + std::to_string(x.shape()[ax]) + " on axis " +
                       std::to_string(axis) + " not divisible by " + std::to_string(factor));
    }
  }
  Pyramid<T> p;
  BasicTensor<T> low = x;
  for (int n = 0; n < levels; ++n) {
    auto bands = dwt_nd(low, axes, interleave);
    low = bands[0];
    p.highs.emplace_back(bands.begin() + 1, bands.end());
  }
  p.low = low;
  return p;
}

template <typename T>
BasicTensor<T> multilevel_idwt(const Pyramid<T>& p, const std::vector<int>& axes) {
  if (p.highs.empty()) throw ShapeError("multilevel_idwt: empty pyramid");
  BasicTensor<T> low = p.low;
  for (auto it = p.highs.rbegin(); it != p.highs.rend(); ++it) {
    std::vector<BasicTensor<T>> bands{low};
    bands.insert(bands.end(), it->begin(), it->end());
    low = idwt_nd(bands, axes);
  }
  return low;
}

#define SNNHASH_WAVELET(T)                                                                                   \
  template std::pair<BasicTensor<T>, BasicTensor<T>> dwt1d_along(const BasicTensor<T>&, int);               \
  template BasicTensor<T> idwt1d_along(const BasicTensor<T>&, const BasicTensor<T>&, int);                   \
  template std::vector<BasicTensor<T>> dwt_nd(const BasicTensor<T>&, const std::vector<int>&,                \
                                              const Interleave<T>&);                                         \
  template BasicTensor<T> idwt_nd(const std::vector<BasicTensor<T>>&, const std::vector<int>&);              \
  template Pyramid<T> multilevel_dwt(const BasicTensor<T>&, const std::vector<int>&, int, const Interleave<T>&); \
  template BasicTensor<T> multilevel_idwt(const Pyramid<T>&, const std::vector<int>&);

SNNHASH_INSTANTIATE(SNNHASH_WAVELET)

}  // namespace snnhash::wavelet
