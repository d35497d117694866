#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace snnhash {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

template <typename T>
struct TensorImpl;

// One recorded primitive application. `backward` receives the gradient of the
// node's output and accumulates into the inputs that require grad.
template <typename T>
struct GradNode {
  using Inputs = std::vector<std::shared_ptr<TensorImpl<T>>>;
  using Backward = std::function<void(std::span<const T> grad_out, const Inputs& inputs)>;

  const char* op = "";
  Inputs inputs;
  Backward backward;
};

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  std::shared_ptr<GradNode<T>> node;

  std::span<T> grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

// Dense row-major tensor handle. Copies share storage; use clone() or detach()
// for an independent value.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  BasicTensor(Shape shape, std::vector<T> data, bool requires_grad = false);
  explicit BasicTensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}

  static BasicTensor zeros(Shape shape, bool requires_grad = false);
  static BasicTensor full(Shape shape, T value, bool requires_grad = false);
  static BasicTensor scalar(T value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::int64_t dim(int axis) const;
  std::int64_t size() const { return static_cast<std::int64_t>(impl_->data.size()); }

  std::span<const T> data() const { return impl_->data; }
  // Writes bypass the graph; only for parameters, buffers and constants.
  std::span<T> mutable_data() { return impl_->data; }
  T item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool flag);
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  std::span<T> mutable_grad() { return impl_->grad_buffer(); }
  void zero_grad() { impl_->grad.clear(); }
  bool is_leaf() const { return impl_->node == nullptr; }
  const char* producer() const { return impl_->node ? impl_->node->op : ""; }

  BasicTensor detach() const;
  BasicTensor clone() const { return detach(); }

  const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl<T>> impl_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

// Graph recording switch (thread local).
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Reverse sweep from a scalar root. Leaf gradients accumulate across calls.
template <typename T>
void backward(const BasicTensor<T>& root);

// Number of distinct nodes reachable from `root` (diagnostics and tests).
template <typename T>
std::size_t graph_size(const BasicTensor<T>& root);

namespace detail {

// Wraps freshly computed data as a tensor and records a node when any input
// requires grad and recording is on.
template <typename T>
BasicTensor<T> make_result(Shape shape, std::vector<T> data, const char* op,
                           std::vector<BasicTensor<T>> inputs,
                           typename GradNode<T>::Backward backward);

}  // namespace detail

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

}  // namespace snnhash
