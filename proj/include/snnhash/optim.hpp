#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "snnhash/tensor.hpp"

namespace snnhash {

struct Param {
  std::string name;
  Tensor value;
  bool decay = true;  // batchnorm affine terms opt out
};

struct LrSchedule {
  enum class Kind { kConstant, kCosine };
  Kind kind = Kind::kCosine;
  double base_lr = 1e-3;
  double min_lr = 0.0;
  std::int64_t total_steps = 1;  // cosine horizon
  std::int64_t warmup_steps = 0;

  double at(std::int64_t step) const;
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct OptimizerState {
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  std::int64_t step = 0;
  LrSchedule schedule;
};

OptimizerState make_optimizer_state(const std::vector<Param>& params, const LrSchedule& schedule);

// One deterministic AdamW update using each parameter's accumulated grad
// (absent grad counts as zero). Throws DomainError naming the parameter when a
// gradient is not finite; parameters are untouched in that case.
void optimizer_step(std::vector<Param>& params, const AdamWConfig& cfg, OptimizerState& state);

void zero_grads(std::vector<Param>& params);

nlohmann::json schedule_to_json(const LrSchedule& s);
LrSchedule schedule_from_json(const nlohmann::json& j);

}  // namespace snnhash
