#include "snnhash/primitive.hpp"

#include <algorithm>

namespace snnhash {

const std::vector<std::string>& primitive_catalog() {
  static const std::vector<std::string> names = {
      "add",     "subtract",     "hadamard_multiply", "scalar_scale", "matmul",
      "linear",  "conv2d",       "maxpool2d",         "batchnorm",    "reshape",
      "permute_axes", "concat",  "slice",             "sum",          "mean",
      "sigmoid", "tanh",         "log",               "exp",          "grouped_contraction",
      "heaviside_with_surrogate"};
  return names;
}

namespace {

void arity(const std::string& op, const std::vector<Tensor>& in, std::size_t lo, std::size_t hi) {
  if (in.size() < lo || in.size() > hi) {
    throw ShapeError(op + ": expected " + std::to_string(lo) +
                     (hi != lo ? ".." + std::to_string(hi) : std::string()) + " inputs, got " +
                     std::to_string(in.size()));
  }
}

template <typename V>
V attr(const nlohmann::json& attrs, const std::string& op, const char* key) {
  if (!attrs.contains(key)) throw std::invalid_argument(op + ": missing attribute '" + key + "'");
  try {
    return attrs.at(key).get<V>();
  } catch (const nlohmann::json::exception&) {
    throw std::invalid_argument(op + ": attribute '" + key + "' has the wrong type");
  }
}

}  // namespace

Tensor apply_primitive(const std::string& op, std::vector<Tensor> in, const nlohmann::json& attrs) {
  using namespace ops;
  if (op == "add" || op == "subtract" || op == "hadamard_multiply" || op == "matmul" ||
      op == "grouped_contraction") {
    arity(op, in, 2, 2);
    if (op == "add") return add(in[0], in[1]);
    if (op == "subtract") return subtract(in[0], in[1]);
    if (op == "hadamard_multiply") return hadamard_multiply(in[0], in[1]);
    if (op == "matmul") return matmul(in[0], in[1]);
    return grouped_contraction(in[0], in[1]);
  }
  if (op == "scalar_scale") {
    arity(op, in, 1, 1);
    return scalar_scale(in[0], attr<double>(attrs, op, "factor"));
  }
  if (op == "linear") {
    arity(op, in, 2, 3);
    return linear(in[0], in[1], in.size() == 3 ? in[2] : Tensor{});
  }
  if (op == "conv2d") {
    arity(op, in, 2, 2);
    return conv2d(in[0], in[1], attrs.value("padding", 0));
  }
  if (op == "maxpool2d") {
    arity(op, in, 1, 1);
    return maxpool2d(in[0]);
  }
  if (op == "batchnorm") {
    arity(op, in, 5, 5);
    BatchNormOptions o;
    o.train = attrs.value("train", true);
    o.momentum = attrs.value("momentum", o.momentum);
    o.eps = attrs.value("eps", o.eps);
    return batchnorm(in[0], in[1], in[2], in[3], in[4], o);
  }
  if (op == "reshape") {
    arity(op, in, 1, 1);
    return reshape(in[0], attr<Shape>(attrs, op, "shape"));
  }
  if (op == "permute_axes") {
    arity(op, in, 1, 1);
    return permute_axes(in[0], attr<std::vector<int>>(attrs, op, "perm"));
  }
  if (op == "concat") {
    arity(op, in, 1, in.size() + 1);
    return concat(in, attr<int>(attrs, op, "axis"));
  }
  if (op == "slice") {
    arity(op, in, 1, 1);
    return slice(in[0], attr<int>(attrs, op, "axis"), attr<std::int64_t>(attrs, op, "start"),
                 attr<std::int64_t>(attrs, op, "length"));
  }
  if (op == "sum" || op == "mean") {
    arity(op, in, 1, 1);
    auto axes = attr<std::vector<int>>(attrs, op, "axes");
    const bool keep = attrs.value("keepdims", false);
    return op == "sum" ? sum(in[0], axes, keep) : mean(in[0], axes, keep);
  }
  if (op == "sigmoid" || op == "tanh" || op == "log" || op == "exp") {
    arity(op, in, 1, 1);
    if (op == "sigmoid") return sigmoid(in[0]);
    if (op == "tanh") return ops::tanh(in[0]);
    if (op == "log") return ops::log(in[0]);
    return ops::exp(in[0]);
  }
  if (op == "heaviside_with_surrogate") {
    arity(op, in, 1, 1);
    SurrogateSpec s;
    s.v_th = attrs.value("v_th", s.v_th);
    s.width = attrs.value("width", s.width);
    return heaviside_with_surrogate(in[0], s);
  }
  throw UnknownOpError("apply_primitive: unknown op '" + op + "'");
}

}  // namespace snnhash
