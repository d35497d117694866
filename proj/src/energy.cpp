#include "snnhash/energy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "snnhash/ops.hpp"

namespace snnhash {

double conv_flops(std::int64_t k, std::int64_t cin, std::int64_t cout, std::int64_t hout, std::int64_t wout) {
  return 2.0 * static_cast<double>(k * k) * static_cast<double>(cin) * static_cast<double>(cout) *
         static_cast<double>(hout) * static_cast<double>(wout);
}

double linear_flops(std::int64_t in, std::int64_t out) { return 2.0 * static_cast<double>(in) * static_cast<double>(out); }

double attention_flops(std::int64_t tokens, std::int64_t dim, std::int64_t heads) {
  const double dh = static_cast<double>(dim / heads);
  return static_cast<double>(heads) * 2.0 * (2.0 * static_cast<double>(tokens) * dh * dh);
}

double dwt_flops(double elements, int axes) { return 4.0 * (elements / 2.0) * axes; }
double hadamard_flops(double elements) { return elements; }
double grouped_contraction_flops(double outputs, std::int64_t group_dim) {
  return 2.0 * static_cast<double>(group_dim) * outputs;
}

double sop(const LayerProfile& l) { return l.rate * static_cast<double>(l.timesteps) * l.flops; }

EnergyReport total_energy(const std::vector<LayerProfile>& layers, const EnergyConstants& c) {
  if (!(c.e_mac_pj > 0.0) || !(c.e_ac_pj > 0.0)) throw std::invalid_argument("energy: constants must be positive");
  int macs = 0;
  for (const auto& l : layers) macs += l.kind == LayerKind::kMac;
  if (macs != 1) throw std::invalid_argument("energy: expected exactly one MAC layer, found " + std::to_string(macs));
  EnergyReport r;
  for (const auto& l : layers) {
    if (!(l.rate >= 0.0 && l.rate <= 1.0)) throw std::invalid_argument("energy: layer '" + l.name + "' rate outside [0, 1]");
    if (!(l.flops >= 0.0)) throw std::invalid_argument("energy: layer '" + l.name + "' has negative FLOPs");
    EnergyEntry e{l.name, l.kind, l.flops, l.rate, 0.0, 0.0, l.timesteps};
    if (l.kind == LayerKind::kMac) {
      e.rate = 1.0;
      e.pj = c.e_mac_pj * l.flops * static_cast<double>(l.timesteps);
      r.mac_pj += e.pj;
    } else {
      e.sop = sop(l);
      e.pj = c.e_ac_pj * e.sop;
      r.ac_pj += e.pj;
    }
    r.layers.push_back(e);
  }
  r.total_pj = r.mac_pj + r.ac_pj;
  return r;
}

nlohmann::json EnergyReport::to_json() const {
  nlohmann::json ls = nlohmann::json::array();
  for (const auto& e : layers) {
    ls.push_back({{"name", e.name},
                  {"kind", e.kind == LayerKind::kMac ? "mac" : "ac"},
                  {"flops", e.flops},
                  {"timesteps", e.timesteps},
                  {"R", e.rate},
                  {"sop", e.sop},
                  {"pJ", e.pj}});
  }
  return {{"layers", ls},
          {"samples", samples},
          {"mac_pJ", mac_pj},
          {"ac_pJ", ac_pj},
          {"total_pJ", total_pj},
          {"total_mJ", total_pj * 1e-9}};
}

std::vector<LayerProfile> model_profile(const ModelConfig& c) {
  c.validate();
  std::vector<LayerProfile> out;
  const std::int64_t T = c.steps;
  auto ac = [&](std::string name, double flops, std::vector<std::pair<std::string, double>> src) {
    LayerProfile l;
    l.name = std::move(name);
    l.flops = flops;
    l.timesteps = T;
    l.rate_sources = std::move(src);
    out.push_back(std::move(l));
  };
  LayerProfile stem;
  stem.name = "stem.conv";
  stem.kind = LayerKind::kMac;
  stem.flops = conv_flops(3, c.in_channels, c.stem_dim, c.height, c.width);
  stem.timesteps = T;
  stem.rate = 1.0;
  out.push_back(stem);

  auto shapes = c.stage_shapes();
  std::int64_t hin = c.height, win = c.width, cin = c.stem_dim;
  for (std::size_t i = 0; i < c.stages.size(); ++i) {
    const auto& sc = c.stages[i];
    const std::string p = "stage" + std::to_string(i);
    // convolution runs before the pool, at the incoming resolution
    ac(p + ".down.conv", conv_flops(3, cin, sc.dim, hin, win), {{p + ".down.sn", 1.0}});
    const std::int64_t H = shapes[i][1], W = shapes[i][2], C = sc.dim;
    const double tokens = static_cast<double>(H * W);
    const std::int64_t hidden = C * c.mlp_ratio;
    for (int b = 0; b < sc.blocks; ++b) {
      const std::string s = p + ".block" + std::to_string(b);
      if (sc.block == BlockType::kSwm) {
        const int axes = c.swm_dims == 3 ? 3 : 2;
        const double shrink = std::pow(2.0, axes);
        const double e0 = tokens * static_cast<double>(C);  // per step
        const double e1 = e0 / shrink, e2 = e1 / shrink;
        const double band1 = (shrink - 1.0) * e1, band2 = (shrink - 1.0) * e2;
        ac(s + ".swm.dwt", dwt_flops(e0, axes) + dwt_flops(e1, axes), {{s + ".swm.dwt_sn", 1.0}});
        ac(s + ".swm.global", hadamard_flops(e2), {{s + ".swm.global", 1.0}});
        ac(s + ".swm.level1.token", hadamard_flops(band1), {{s + ".swm.level1.token", 1.0}});
        ac(s + ".swm.level1.channel", grouped_contraction_flops(band1, C / c.swm_groups),
           {{s + ".swm.level1.channel", 1.0}});
        ac(s + ".swm.level2.token", hadamard_flops(band2), {{s + ".swm.level2.token", 1.0}});
        ac(s + ".swm.level2.channel", grouped_contraction_flops(band2, C / c.swm_groups),
           {{s + ".swm.level2.channel", 1.0}});
        // the inverse sees mixer outputs, which are nonzero only where those spikes were
        ac(s + ".swm.idwt", dwt_flops(e0, axes) + dwt_flops(e1, axes),
           {{s + ".swm.global", e2}, {s + ".swm.level1.channel", band1}, {s + ".swm.level2.channel", band2}});
      } else {
        ac(s + ".ssa.qkv", 3.0 * tokens * linear_flops(C, C), {{s + ".ssa.in_sn", 1.0}});
        ac(s + ".ssa.attention", attention_flops(H * W, C, c.ssa_heads),
           {{s + ".ssa.q_sn", 1.0}, {s + ".ssa.k_sn", 1.0}, {s + ".ssa.v_sn", 1.0}});
        ac(s + ".ssa.proj", tokens * linear_flops(C, C), {{s + ".ssa.attn_sn", 1.0}});
      }
      ac(s + ".mlp.fc1", tokens * linear_flops(C, hidden), {{s + ".mlp.sn1", 1.0}});
      ac(s + ".mlp.fc2", tokens * linear_flops(hidden, C), {{s + ".mlp.sn2", 1.0}});
    }
    hin = H;
    win = W;
    cin = C;
  }
  return out;
}

void apply_rates(std::vector<LayerProfile>& layers, const SpikeMonitor& monitor) {
  const auto& sites = monitor.sites();
  for (auto& l : layers) {
    if (l.kind == LayerKind::kMac || l.rate_sources.empty()) continue;
    double num = 0, den = 0;
    for (const auto& [site, w] : l.rate_sources) {
      auto it = sites.find(site);
      const double r = it == sites.end() ? 0.0 : it->second.rate();
      num += w * r;
      den += w;
    }
    l.rate = den > 0 ? num / den : 0.0;
  }
}

EnergyReport profile_model(Model& model, const Tensor& samples, std::int64_t batch, const EnergyConstants& constants) {
  if (samples.rank() != 5 || samples.shape()[1] < 1) {
    throw ShapeError("profile_model: samples must be [T, N, H, W, C] with N >= 1, got " + shape_str(samples.shape()));
  }
  if (batch < 1) throw std::invalid_argument("profile_model: batch must be positive");
  auto layers = model_profile(model.config);
  const std::int64_t N = samples.shape()[1];
  SpikeMonitor monitor;
  {
    NoGradGuard ng;
    const auto ctx = make_context(model.config, false);
    for (std::int64_t s = 0; s < N; s += batch) {
      const std::int64_t len = std::min(batch, N - s);
      forward(model, ops::slice(samples, 1, s, len), ctx);
    }
  }
  apply_rates(layers, monitor);
  auto r = total_energy(layers, constants);
  r.samples = N;
  return r;
}

}  // namespace snnhash
