#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "snnhash/tensor.hpp"

namespace snnhash {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  // location of the worst coordinate
  std::size_t tensor_index = 0;
  std::size_t element = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares reverse-mode gradients of a scalar program against central
// differences, coordinate by coordinate:
//   max |analytic - fd| / (|fd| + 1e-8).
// `params` are leaves the program reads; they are perturbed in place and
// restored. Programs containing spike nodes should be evaluated under
// ops::SurrogateForwardGuard so the checked function is smooth.
template <typename T>
GradCheckReport check_gradients(const std::function<BasicTensor<T>()>& program,
                                std::vector<BasicTensor<T>> params, double eps);

template <typename T>
GradCheckReport check_gradients(const std::function<BasicTensor<T>(const BasicTensor<T>&)>& program,
                                const BasicTensor<T>& point, double eps);

}  // namespace snnhash
