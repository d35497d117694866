#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "snnhash/tensor.hpp"

namespace snnhash {

// Sum over all ordered pairs (i, j) of log(1 + e^W) - m_ij W with W = b_i.b_j / 2.
// codes: [N, L] in the +-1 view; M: [N, N], treated as a constant.
Tensor pairwise_similarity_loss(const Tensor& codes, const Tensor& M);

// m_ij = 1 when labels match.
Tensor hard_similarity(std::span<const int> labels);

// Class-level similarity statistics gathered from correctly classified pairs.
struct SoftSimilarityState {
  int classes = 0;
  std::vector<double> sum;           // C x C, row-major
  std::vector<std::int64_t> count;   // C x C
  std::int64_t zero_norm_pairs = 0;  // pairs skipped because a vector had zero norm

  static SoftSimilarityState make(int classes);
  void reset();
};

// H: [N, L] time-averaged membrane potentials. Only i != j pairs in which both
// samples are predicted correctly contribute; each pair updates (y_i, y_j) and
// (y_j, y_i).
void accumulate_soft(SoftSimilarityState& state, std::span<const float> H, std::int64_t N, std::int64_t L,
                     std::span<const int> labels, std::span<const int> predictions);

// Mean per cell (0 where nothing was seen), zeroed at or below tau, unit diagonal.
std::vector<double> finalize_soft(const SoftSimilarityState& state, double tau);

std::vector<double> hard_class_matrix(int classes);

// lambda * hard + (1 - lambda) * soft, both C x C.
std::vector<double> blend(std::span<const double> hard, std::span<const double> soft, double lambda);

// M[i, j] = S[y_i, y_j].
Tensor expand_to_batch(std::span<const double> S, int classes, std::span<const int> labels);

struct LossBreakdown {
  Tensor total;
  double similarity = 0;      // raw pairwise sum
  double classification = 0;  // raw cross-entropy sum
  std::int64_t clamped = 0;   // true-class probabilities clamped at 1e-12
};

// alpha * Ls / N^2 + beta * Lcls / N, where Lcls = -sum log p_true.
// log_probs: [N, classes].
LossBreakdown total_loss(const Tensor& codes, const Tensor& M, const Tensor& log_probs, std::span<const int> labels,
                         double alpha, double beta);

struct RoundSchedule {
  int initial = 10;      // hard-only epochs
  int length = 5;        // epochs per round afterwards
  int final_window = 5;  // trailing epochs that are one round each
};

struct RoundDecision {
  bool use_soft = false;      // soft matrix blended into this epoch's targets
  bool finalize_now = false;  // close the round after this epoch
  double lambda = 1.0;
};

// Epochs are 0-based. Lambda is 1 through the initial round, then falls
// linearly to 0 at the last epoch.
RoundDecision round_scheduler(int epoch, int total_epochs, const RoundSchedule& schedule);

nlohmann::json soft_matrix_to_json(std::span<const double> S, int classes, const SoftSimilarityState* stats = nullptr);

}  // namespace snnhash
