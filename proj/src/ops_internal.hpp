#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "snnhash/tensor.hpp"

namespace snnhash::ops::internal {

inline int normalize_axis(int axis, std::size_t rank, const char* op) {
  const int r = static_cast<int>(rank);
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(rank));
  }
  return axis;
}

inline std::vector<std::int64_t> contiguous_strides(const Shape& shape) {
  std::vector<std::int64_t> s(shape.size(), 1);
  for (int d = static_cast<int>(shape.size()) - 2; d >= 0; --d) {
    s[static_cast<std::size_t>(d)] = s[static_cast<std::size_t>(d) + 1] * shape[static_cast<std::size_t>(d) + 1];
  }
  return s;
}

// Strides of `in` when indexed by positions of `out` (rank-aligned from the
// right); broadcast axes get stride 0.
inline std::vector<std::int64_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::int64_t> s(out.size(), 0);
  auto cs = contiguous_strides(in);
  const std::size_t off = out.size() - in.size();
  for (std::size_t d = 0; d < in.size(); ++d) {
    s[off + d] = in[d] == 1 ? 0 : cs[d];
  }
  return s;
}

// Calls f(linear, offset_a, offset_b) for every position of `shape` in
// row-major order.
template <class F>
void for_each_index(const Shape& shape, const std::vector<std::int64_t>& sa,
                    const std::vector<std::int64_t>& sb, F&& f) {
  const std::size_t r = shape.size();
  if (r == 0) {
    f(std::int64_t{0}, std::int64_t{0}, std::int64_t{0});
    return;
  }
  const std::int64_t inner = shape[r - 1];
  const std::int64_t ia = sa[r - 1], ib = sb[r - 1];
  const std::int64_t total = numel(shape);
  std::vector<std::int64_t> idx(r, 0);
  std::int64_t oa = 0, ob = 0;
  for (std::int64_t lin = 0; lin < total; lin += inner) {
    for (std::int64_t j = 0; j < inner; ++j) f(lin + j, oa + j * ia, ob + j * ib);
    for (int d = static_cast<int>(r) - 2; d >= 0; --d) {
      const auto du = static_cast<std::size_t>(d);
      ++idx[du];
      oa += sa[du];
      ob += sb[du];
      if (idx[du] < shape[du]) break;
      oa -= sa[du] * shape[du];
      ob -= sb[du] * shape[du];
      idx[du] = 0;
    }
  }
}

}  // namespace snnhash::ops::internal

#define SNNHASH_INSTANTIATE(MACRO) \
  MACRO(float)                     \
  MACRO(double)
