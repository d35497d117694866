#include "snnhash/optim.hpp"

#include <cmath>
#include <numbers>

namespace snnhash {

double LrSchedule::at(std::int64_t step) const {
  if (warmup_steps > 0 && step < warmup_steps) {
    return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  if (kind == Kind::kConstant) return base_lr;
  const double span = static_cast<double>(std::max<std::int64_t>(1, total_steps - warmup_steps));
  const double progress = std::min(1.0, static_cast<double>(step - warmup_steps) / span);
  return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

OptimizerState make_optimizer_state(const std::vector<Param>& params, const LrSchedule& schedule) {
  OptimizerState s;
  s.schedule = schedule;
  for (const auto& p : params) {
    s.m.emplace_back(static_cast<std::size_t>(p.value.size()), 0.0f);
    s.v.emplace_back(static_cast<std::size_t>(p.value.size()), 0.0f);
  }
  return s;
}

void optimizer_step(std::vector<Param>& params, const AdamWConfig& cfg, OptimizerState& state) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("optimizer_step: state tracks " + std::to_string(state.m.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& p = params[k];
    if (state.m[k].size() != static_cast<std::size_t>(p.value.size())) {
      throw ShapeError("optimizer_step: moment size mismatch for " + p.name);
    }
    if (!p.value.has_grad()) continue;
    auto g = p.value.grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw DomainError("optimizer_step: non-finite gradient in '" + p.name + "' at element " +
                          std::to_string(i));
      }
    }
  }
  const double lr = state.schedule.at(state.step);
  if (!(lr >= 0.0)) throw DomainError("optimizer_step: negative learning rate");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    auto w = p.value.mutable_data();
    std::span<const float> g = p.value.has_grad() ? p.value.grad() : std::span<const float>{};
    auto& m = state.m[k];
    auto& v = state.v[k];
    const double wd = p.decay ? cfg.weight_decay : 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g.empty() ? 0.0 : static_cast<double>(g[i]);
      const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double update = (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps) + wd * w[i];
      w[i] = static_cast<float>(w[i] - lr * update);
    }
  }
}

void zero_grads(std::vector<Param>& params) {
  for (auto& p : params) p.value.zero_grad();
}

nlohmann::json schedule_to_json(const LrSchedule& s) {
  return {{"kind", s.kind == LrSchedule::Kind::kCosine ? "cosine" : "constant"},
          {"base_lr", s.base_lr},
          {"min_lr", s.min_lr},
          {"total_steps", s.total_steps},
          {"warmup_steps", s.warmup_steps}};
}

LrSchedule schedule_from_json(const nlohmann::json& j) {
  LrSchedule s;
  s.kind = j.value("kind", std::string("cosine")) == "constant" ? LrSchedule::Kind::kConstant
                                                                : LrSchedule::Kind::kCosine;
  s.base_lr = j.value("base_lr", s.base_lr);
  s.min_lr = j.value("min_lr", s.min_lr);
  s.total_steps = j.value("total_steps", s.total_steps);
  s.warmup_steps = j.value("warmup_steps", s.warmup_steps);
  return s;
}

}  // namespace snnhash
