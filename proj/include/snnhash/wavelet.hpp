#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "snnhash/tensor.hpp"

// Orthonormal Haar transforms along chosen axes of a tensor.
namespace snnhash::wavelet {

template <typename T>
using Interleave = std::function<BasicTensor<T>(const BasicTensor<T>&)>;

// a[n] = (x[2n] + x[2n+1]) / sqrt2, d[n] = (x[2n] - x[2n+1]) / sqrt2.
template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> dwt1d_along(const BasicTensor<T>& x, int axis);

template <typename T>
BasicTensor<T> idwt1d_along(const BasicTensor<T>& a, const BasicTensor<T>& d, int axis);

// Separable transform over `axes` in order, 2^k bands. Band index bits: the
// first axis is the most significant bit, 1 = high-pass. Index 0 is the all-low
// band. `interleave` (if set) is applied to every band before each axis.
template <typename T>
std::vector<BasicTensor<T>> dwt_nd(const BasicTensor<T>& x, const std::vector<int>& axes,
                                   const Interleave<T>& interleave = {});

template <typename T>
BasicTensor<T> idwt_nd(const std::vector<BasicTensor<T>>& bands, const std::vector<int>& axes);

template <typename T>
struct Pyramid {
  std::vector<std::vector<BasicTensor<T>>> highs;  // highs[n] holds bands 1..2^k-1 of level n+1
  BasicTensor<T> low;
};

template <typename T>
Pyramid<T> multilevel_dwt(const BasicTensor<T>& x, const std::vector<int>& axes, int levels,
                          const Interleave<T>& interleave = {});

template <typename T>
BasicTensor<T> multilevel_idwt(const Pyramid<T>& pyramid, const std::vector<int>& axes);

}  // namespace snnhash::wavelet
