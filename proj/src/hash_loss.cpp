#include "snnhash/hash_loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "snnhash/ops.hpp"

namespace snnhash {

Tensor pairwise_similarity_loss(const Tensor& codes, const Tensor& M) {
  if (codes.rank() != 2) throw ShapeError("pairwise loss: codes must be [N, L], got " + shape_str(codes.shape()));
  const std::int64_t N = codes.shape()[0];
  if (M.shape() != Shape{N, N}) {
    throw ShapeError("pairwise loss: similarity " + shape_str(M.shape()) + " does not match " + std::to_string(N) +
                     " codes");
  }
  for (float v : codes.data()) {
    if (!std::isfinite(v)) throw DomainError("pairwise loss: non-finite code entry");
  }
  auto omega = ops::scalar_scale(ops::matmul(codes, ops::permute_axes(codes, {1, 0})), 0.5);
  return ops::sum_all(ops::subtract(ops::softplus(omega), ops::hadamard_multiply(M.detach(), omega)));
}

Tensor hard_similarity(std::span<const int> labels) {
  const auto N = static_cast<std::int64_t>(labels.size());
  std::vector<float> m(static_cast<std::size_t>(N * N));
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t j = 0; j < labels.size(); ++j) m[i * labels.size() + j] = labels[i] == labels[j] ? 1.0f : 0.0f;
  return Tensor({N, N}, std::move(m));
}

SoftSimilarityState SoftSimilarityState::make(int classes) {
  if (classes < 1) throw std::invalid_argument("soft similarity: need at least one class");
  SoftSimilarityState s;
  s.classes = classes;
  s.reset();
  return s;
}

void SoftSimilarityState::reset() {
  const auto n = static_cast<std::size_t>(classes) * static_cast<std::size_t>(classes);
  sum.assign(n, 0.0);
  count.assign(n, 0);
  zero_norm_pairs = 0;
}

void accumulate_soft(SoftSimilarityState& state, std::span<const float> H, std::int64_t N, std::int64_t L,
                     std::span<const int> labels, std::span<const int> predictions) {
  if (static_cast<std::int64_t>(H.size()) != N * L || static_cast<std::int64_t>(labels.size()) != N ||
      static_cast<std::int64_t>(predictions.size()) != N) {
    throw ShapeError("accumulate_soft: inconsistent sizes");
  }
  const int C = state.classes;
  std::vector<double> norm(static_cast<std::size_t>(N));
  for (std::int64_t i = 0; i < N; ++i) {
    double s = 0;
    for (std::int64_t l = 0; l < L; ++l) {
      const double v = H[static_cast<std::size_t>(i * L + l)];
      if (!std::isfinite(v)) throw DomainError("accumulate_soft: non-finite membrane potential in row " + std::to_string(i));
      s += v * v;
    }
    norm[static_cast<std::size_t>(i)] = std::sqrt(s);
  }
  for (std::int64_t i = 0; i < N; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    if (labels[iu] < 0 || labels[iu] >= C) throw std::out_of_range("accumulate_soft: label out of range");
    if (predictions[iu] != labels[iu]) continue;
    for (std::int64_t j = i + 1; j < N; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      if (predictions[ju] != labels[ju]) continue;
      if (norm[iu] == 0.0 || norm[ju] == 0.0) {
        ++state.zero_norm_pairs;
        continue;
      }
      double dot = 0;
      for (std::int64_t l = 0; l < L; ++l)
        dot += static_cast<double>(H[static_cast<std::size_t>(i * L + l)]) * H[static_cast<std::size_t>(j * L + l)];
      const double r = dot / (norm[iu] * norm[ju]);
      const auto a = static_cast<std::size_t>(labels[iu]), b = static_cast<std::size_t>(labels[ju]);
      const auto Cu = static_cast<std::size_t>(C);
      state.sum[a * Cu + b] += r;
      state.count[a * Cu + b] += 1;
      if (a != b) {
        state.sum[b * Cu + a] += r;
        state.count[b * Cu + a] += 1;
      }
    }
  }
}

std::vector<double> finalize_soft(const SoftSimilarityState& state, double tau) {
  const auto C = static_cast<std::size_t>(state.classes);
  std::vector<double> s(C * C, 0.0);
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (state.count[k] > 0) s[k] = state.sum[k] / static_cast<double>(state.count[k]);
    if (!(s[k] > tau)) s[k] = 0.0;
  }
  for (std::size_t c = 0; c < C; ++c) s[c * C + c] = 1.0;
  return s;
}

std::vector<double> hard_class_matrix(int classes) {
  const auto C = static_cast<std::size_t>(classes);
  std::vector<double> s(C * C, 0.0);
  for (std::size_t c = 0; c < C; ++c) s[c * C + c] = 1.0;
  return s;
}

std::vector<double> blend(std::span<const double> hard, std::span<const double> soft, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("blend: lambda must lie in [0, 1]");
  if (hard.size() != soft.size()) throw ShapeError("blend: matrices differ in size");
  std::vector<double> s(hard.size());
  for (std::size_t k = 0; k < s.size(); ++k) s[k] = lambda * hard[k] + (1.0 - lambda) * soft[k];
  return s;
}

Tensor expand_to_batch(std::span<const double> S, int classes, std::span<const int> labels) {
  const auto C = static_cast<std::size_t>(classes);
  if (S.size() != C * C) throw ShapeError("expand_to_batch: class matrix is not C x C");
  const auto N = labels.size();
  std::vector<float> m(N * N);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      const auto a = static_cast<std::size_t>(labels[i]), b = static_cast<std::size_t>(labels[j]);
      if (a >= C || b >= C) throw std::out_of_range("expand_to_batch: label out of range");
      m[i * N + j] = static_cast<float>(S[a * C + b]);
    }
  }
  const auto n = static_cast<std::int64_t>(N);
  return Tensor({n, n}, std::move(m));
}

LossBreakdown total_loss(const Tensor& codes, const Tensor& M, const Tensor& log_probs, std::span<const int> labels,
                         double alpha, double beta) {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw std::invalid_argument("total_loss: alpha and beta must be >= 0");
  if (log_probs.rank() != 2 || log_probs.shape()[0] != static_cast<std::int64_t>(labels.size())) {
    throw ShapeError("total_loss: log_probs " + shape_str(log_probs.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::int64_t N = log_probs.shape()[0], K = log_probs.shape()[1];
  const float floor = static_cast<float>(std::log(1e-12));
  LossBreakdown out;
  // pick the true-class entries; clamped rows contribute a constant instead
  std::vector<float> pick(static_cast<std::size_t>(N * K), 0.0f);
  double clamped_sum = 0;
  for (std::int64_t i = 0; i < N; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= K) throw std::out_of_range("total_loss: label out of range");
    const float lp = log_probs.data()[static_cast<std::size_t>(i * K + y)];
    if (!(lp >= floor)) {
      ++out.clamped;
      clamped_sum += -static_cast<double>(floor);
    } else {
      pick[static_cast<std::size_t>(i * K + y)] = 1.0f;
    }
  }
  auto ce = ops::add(ops::scalar_scale(ops::sum_all(ops::hadamard_multiply(log_probs, Tensor({N, K}, std::move(pick)))), -1.0),
                     Tensor::scalar(static_cast<float>(clamped_sum)));
  auto ls = pairwise_similarity_loss(codes, M);
  out.similarity = ls.item();
  out.classification = ce.item();
  const double n = static_cast<double>(N);
  out.total = ops::add(ops::scalar_scale(ls, alpha / (n * n)), ops::scalar_scale(ce, beta / n));
  return out;
}

RoundDecision round_scheduler(int epoch, int total_epochs, const RoundSchedule& s) {
  if (epoch < 0 || epoch >= total_epochs) {
    throw std::out_of_range("round_scheduler: epoch " + std::to_string(epoch) + " outside [0, " +
                            std::to_string(total_epochs) + ")");
  }
  if (s.initial < 1 || s.length < 1 || s.final_window < 0) throw std::invalid_argument("round_scheduler: bad schedule");
  RoundDecision d;
  const int I = std::min(s.initial, total_epochs);
  const int next = epoch + 1;  // epochs completed once this one ends
  d.use_soft = epoch >= I;
  if (next == I) {
    d.finalize_now = true;
  } else if (next > I) {
    d.finalize_now = next >= total_epochs - s.final_window || (next - I) % s.length == 0;
  }
  if (epoch >= I && total_epochs > I) {
    d.lambda = static_cast<double>(total_epochs - 1 - epoch) / static_cast<double>(total_epochs - I);
  }
  return d;
}

nlohmann::json soft_matrix_to_json(std::span<const double> S, int classes, const SoftSimilarityState* stats) {
  const auto C = static_cast<std::size_t>(classes);
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t a = 0; a < C; ++a) rows.push_back(std::vector<double>(S.begin() + static_cast<std::ptrdiff_t>(a * C),
                                                                         S.begin() + static_cast<std::ptrdiff_t>((a + 1) * C)));
  nlohmann::json j{{"classes", classes}, {"matrix", rows}};
  if (stats) {
    nlohmann::json counts = nlohmann::json::array();
    for (std::size_t a = 0; a < C; ++a)
      counts.push_back(std::vector<std::int64_t>(stats->count.begin() + static_cast<std::ptrdiff_t>(a * C),
                                                 stats->count.begin() + static_cast<std::ptrdiff_t>((a + 1) * C)));
    j["counts"] = counts;
    j["zero_norm_pairs"] = stats->zero_norm_pairs;
  }
  return j;
}

}  // namespace snnhash
