#include <cmath>
#include <memory>

#include "ops_internal.hpp"
#include "snnhash/ops.hpp"

namespace snnhash::ops {

template <typename T>
BasicTensor<T> batchnorm(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                         const BasicTensor<T>& beta, BasicTensor<T>& running_mean,
                         BasicTensor<T>& running_var, const BatchNormOptions& opts) {
  if (x.rank() < 1) throw ShapeError("batchnorm: scalar input");
  const std::int64_t C = x.shape().back();
  auto check = [&](const BasicTensor<T>& p, const char* what) {
    if (!p.defined() || p.rank() != 1 || p.shape()[0] != C) {
      throw ShapeError(std::string("batchnorm: ") + what + " must be [" + std::to_string(C) +
                       "] for input " + shape_str(x.shape()));
    }
  };
  check(gamma, "gamma");
  check(beta, "beta");
  check(running_mean, "running_mean");
  check(running_var, "running_var");
  const std::int64_t rows = x.size() / C;
  if (opts.train && rows < 2) {
    throw ShapeError("batchnorm: train mode needs at least 2 rows, got " + shape_str(x.shape()));
  }

  auto dx = x.data();
  auto g = gamma.data();
  auto b = beta.data();
  // per-channel scale and the normalized input, both needed by backward
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(C));
  auto xhat = std::make_shared<std::vector<T>>(dx.size());
  std::vector<T> out(dx.size());

  if (opts.train) {
    std::vector<double> mu(static_cast<std::size_t>(C), 0.0), var(static_cast<std::size_t>(C), 0.0);
    for (std::int64_t i = 0; i < rows; ++i)
      for (std::int64_t c = 0; c < C; ++c) mu[static_cast<std::size_t>(c)] += dx[static_cast<std::size_t>(i * C + c)];
    for (auto& m : mu) m /= static_cast<double>(rows);
    for (std::int64_t i = 0; i < rows; ++i)
      for (std::int64_t c = 0; c < C; ++c) {
        const double d = dx[static_cast<std::size_t>(i * C + c)] - mu[static_cast<std::size_t>(c)];
        var[static_cast<std::size_t>(c)] += d * d;
      }
    auto rm = running_mean.mutable_data();
    auto rv = running_var.mutable_data();
    for (std::int64_t c = 0; c < C; ++c) {
      const auto cu = static_cast<std::size_t>(c);
      const double biased = var[cu] / static_cast<double>(rows);
      const double unbiased = var[cu] / static_cast<double>(rows - 1);
      (*inv_std)[cu] = static_cast<T>(1.0 / std::sqrt(biased + opts.eps));
      rm[cu] = static_cast<T>((1.0 - opts.momentum) * rm[cu] + opts.momentum * mu[cu]);
      rv[cu] = static_cast<T>((1.0 - opts.momentum) * rv[cu] + opts.momentum * unbiased);
    }
    for (std::int64_t i = 0; i < rows; ++i)
      for (std::int64_t c = 0; c < C; ++c) {
        const auto k = static_cast<std::size_t>(i * C + c);
        const auto cu = static_cast<std::size_t>(c);
        (*xhat)[k] = static_cast<T>((dx[k] - mu[cu]) * (*inv_std)[cu]);
        out[k] = (*xhat)[k] * g[cu] + b[cu];
      }
  } else {
    auto rm = running_mean.data();
    auto rv = running_var.data();
    for (std::int64_t c = 0; c < C; ++c) {
      (*inv_std)[static_cast<std::size_t>(c)] =
          static_cast<T>(1.0 / std::sqrt(static_cast<double>(rv[static_cast<std::size_t>(c)]) + opts.eps));
    }
    for (std::int64_t i = 0; i < rows; ++i)
      for (std::int64_t c = 0; c < C; ++c) {
        const auto k = static_cast<std::size_t>(i * C + c);
        const auto cu = static_cast<std::size_t>(c);
        (*xhat)[k] = (dx[k] - rm[cu]) * (*inv_std)[cu];
        out[k] = (*xhat)[k] * g[cu] + b[cu];
      }
  }

  const bool train = opts.train;
  return detail::make_result<T>(
      x.shape(), std::move(out), "batchnorm", {x, gamma, beta},
      [inv_std, xhat, rows, C, train](std::span<const T> gy, const typename GradNode<T>::Inputs& in) {
        auto& X = in[0];
        auto& Gm = in[1];
        auto& Bt = in[2];
        const auto Cu = static_cast<std::size_t>(C);
        std::vector<double> sum_g(Cu, 0.0), sum_gx(Cu, 0.0);
        for (std::int64_t i = 0; i < rows; ++i)
          for (std::size_t c = 0; c < Cu; ++c) {
            const auto k = static_cast<std::size_t>(i) * Cu + c;
            sum_g[c] += gy[k];
            sum_gx[c] += static_cast<double>(gy[k]) * (*xhat)[k];
          }
        if (Gm->requires_grad) {
          auto gg = Gm->grad_buffer();
          for (std::size_t c = 0; c < Cu; ++c) gg[c] += static_cast<T>(sum_gx[c]);
        }
        if (Bt->requires_grad) {
          auto gb = Bt->grad_buffer();
          for (std::size_t c = 0; c < Cu; ++c) gb[c] += static_cast<T>(sum_g[c]);
        }
        if (!X->requires_grad) return;
        auto gx = X->grad_buffer();
        const auto& gam = Gm->data;
        const double n = static_cast<double>(rows);
        for (std::int64_t i = 0; i < rows; ++i)
          for (std::size_t c = 0; c < Cu; ++c) {
            const auto k = static_cast<std::size_t>(i) * Cu + c;
            const double scale = static_cast<double>(gam[c]) * (*inv_std)[c];
            if (train) {
              gx[k] += static_cast<T>(scale * (gy[k] - sum_g[c] / n - (*xhat)[k] * sum_gx[c] / n));
            } else {
              gx[k] += static_cast<T>(scale * gy[k]);
            }
          }
      });
}

#define SNNHASH_NORM_OPS(T)                                                                      \
  template BasicTensor<T> batchnorm(const BasicTensor<T>&, const BasicTensor<T>&,               \
                                    const BasicTensor<T>&, BasicTensor<T>&, BasicTensor<T>&,    \
                                    const BatchNormOptions&);

SNNHASH_INSTANTIATE(SNNHASH_NORM_OPS)

}  // namespace snnhash::ops
