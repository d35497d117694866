#include "snnhash/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace snnhash {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data, bool requires_grad) {
  for (auto e : shape) {
    if (e <= 0) throw ShapeError("tensor: non-positive extent in shape " + shape_str(shape));
  }
  if (numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
  }
  impl_ = std::make_shared<TensorImpl<T>>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
  auto n = static_cast<std::size_t>(numel(shape));
  return BasicTensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
  auto n = static_cast<std::size_t>(numel(shape));
  return BasicTensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value) {
  return BasicTensor(Shape{1}, std::vector<T>{value});
}

template <typename T>
std::int64_t BasicTensor<T>::dim(int axis) const {
  const int r = static_cast<int>(rank());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(shape()));
  }
  return impl_->shape[static_cast<std::size_t>(axis)];
}

template <typename T>
T BasicTensor<T>::item() const {
  if (impl_->data.size() != 1) {
    throw ShapeError("tensor: item() on non-scalar " + shape_str(shape()));
  }
  return impl_->data[0];
}

template <typename T>
void BasicTensor<T>::set_requires_grad(bool flag) {
  if (!is_leaf()) throw GraphError("tensor: requires_grad can only be set on leaves");
  impl_->requires_grad = flag;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return BasicTensor(impl_->shape, impl_->data, false);
}

template <typename T>
static std::vector<TensorImpl<T>*> topo_order(TensorImpl<T>* root) {
  // Iterative post-order DFS; output lists each node after all its inputs.
  std::vector<TensorImpl<T>*> order;
  std::unordered_set<TensorImpl<T>*> visited;
  std::vector<std::pair<TensorImpl<T>*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    if (impl->node && next < impl->node->inputs.size()) {
      TensorImpl<T>* child = impl->node->inputs[next++].get();
      if (child && child->requires_grad && !visited.count(child)) {
        visited.insert(child);
        stack.emplace_back(child, 0);
      }
      continue;
    }
    order.push_back(impl);
    stack.pop_back();
  }
  return order;
}

template <typename T>
void backward(const BasicTensor<T>& root) {
  if (!root.defined()) throw GraphError("backward: undefined root");
  if (root.size() != 1) {
    throw GraphError("backward: root must be scalar, got " + shape_str(root.shape()));
  }
  if (!root.requires_grad()) throw GraphError("backward: root is detached from any graph");

  auto order = topo_order(root.impl().get());
  root.impl()->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl<T>* impl = *it;
    if (!impl->node) continue;
    if (impl->grad.empty()) continue;  // unreachable branch
    impl->node->backward(impl->grad, impl->node->inputs);
    // interior gradients are not retained
    std::vector<T>().swap(impl->grad);
  }
}

template <typename T>
std::size_t graph_size(const BasicTensor<T>& root) {
  if (!root.defined() || !root.requires_grad()) return 0;
  auto order = topo_order(root.impl().get());
  return static_cast<std::size_t>(
      std::count_if(order.begin(), order.end(), [](auto* p) { return p->node != nullptr; }));
}

namespace detail {

template <typename T>
BasicTensor<T> make_result(Shape shape, std::vector<T> data, const char* op,
                           std::vector<BasicTensor<T>> inputs,
                           typename GradNode<T>::Backward bw) {
  BasicTensor<T> out(std::move(shape), std::move(data), false);
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || (in.defined() && in.requires_grad());
  if (!any) return out;
  auto node = std::make_shared<GradNode<T>>();
  node->op = op;
  node->inputs.reserve(inputs.size());
  for (const auto& in : inputs) node->inputs.push_back(in.defined() ? in.impl() : nullptr);
  node->backward = std::move(bw);
  out.impl()->requires_grad = true;
  out.impl()->node = std::move(node);
  return out;
}

template BasicTensor<float> make_result(Shape, std::vector<float>, const char*,
                                        std::vector<BasicTensor<float>>,
                                        GradNode<float>::Backward);
template BasicTensor<double> make_result(Shape, std::vector<double>, const char*,
                                         std::vector<BasicTensor<double>>,
                                         GradNode<double>::Backward);

}  // namespace detail

template class BasicTensor<float>;
template class BasicTensor<double>;
template void backward(const BasicTensor<float>&);
template void backward(const BasicTensor<double>&);
template std::size_t graph_size(const BasicTensor<float>&);
template std::size_t graph_size(const BasicTensor<double>&);

}  // namespace snnhash
