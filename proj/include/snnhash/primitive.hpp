#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "snnhash/ops.hpp"

namespace snnhash {

class UnknownOpError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Name-dispatched entry into the primitive catalog, for config-driven callers
// and tests. Attributes:
//   scalar_scale {factor}, conv2d {padding}, reshape {shape}, permute_axes {perm},
//   concat {axis}, slice {axis, start, length}, sum/mean {axes, keepdims},
//   batchnorm {train, momentum, eps} with inputs (x, gamma, beta, mean, var),
//   heaviside_with_surrogate {v_th, width}.
Tensor apply_primitive(const std::string& op_name, std::vector<Tensor> inputs,
                       const nlohmann::json& attrs = nlohmann::json::object());

const std::vector<std::string>& primitive_catalog();

}  // namespace snnhash
