#include "snnhash/gradcheck.hpp"

#include <cmath>

namespace snnhash {

template <typename T>
GradCheckReport check_gradients(const std::function<BasicTensor<T>()>& program,
                                std::vector<BasicTensor<T>> params, double eps) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  auto root = program();
  if (root.size() != 1) {
    throw ShapeError("check_gradients: program output must be scalar, got " + shape_str(root.shape()));
  }
  backward(root);
  std::vector<std::vector<T>> analytic;
  for (auto& p : params) {
    analytic.emplace_back(p.has_grad() ? std::vector<T>(p.grad().begin(), p.grad().end())
                                       : std::vector<T>(static_cast<std::size_t>(p.size()), T(0)));
  }

  GradCheckReport report;
  NoGradGuard no_grad;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto data = params[t].mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const T saved = data[i];
      data[i] = static_cast<T>(saved + eps);
      const double up = static_cast<double>(program().item());
      data[i] = static_cast<T>(saved - eps);
      const double down = static_cast<double>(program().item());
      data[i] = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double a = static_cast<double>(analytic[t][i]);
      const double rel = std::abs(a - fd) / (std::abs(fd) + 1e-8);
      ++report.coordinates;
      if (rel > report.max_rel_error || !std::isfinite(rel)) {
        report.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
        report.tensor_index = t;
        report.element = i;
        report.analytic = a;
        report.numeric = fd;
      }
    }
  }
  return report;
}

template <typename T>
GradCheckReport check_gradients(const std::function<BasicTensor<T>(const BasicTensor<T>&)>& program,
                                const BasicTensor<T>& point, double eps) {
  BasicTensor<T> x = point.detach();
  return check_gradients<T>(std::function<BasicTensor<T>()>([&] { return program(x); }), {x}, eps);
}

template GradCheckReport check_gradients(const std::function<Tensor()>&, std::vector<Tensor>, double);
template GradCheckReport check_gradients(const std::function<TensorD()>&, std::vector<TensorD>, double);
template GradCheckReport check_gradients(const std::function<Tensor(const Tensor&)>&, const Tensor&, double);
template GradCheckReport check_gradients(const std::function<TensorD(const TensorD&)>&, const TensorD&, double);

}  // namespace snnhash
