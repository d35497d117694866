#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "snnhash/lif.hpp"
#include "snnhash/model.hpp"

namespace snnhash {

// Operation counts. A multiply-add pair counts as two.
double conv_flops(std::int64_t k, std::int64_t cin, std::int64_t cout, std::int64_t hout, std::int64_t wout);
double linear_flops(std::int64_t in, std::int64_t out);
// Q (K^T V) for one step: two products of tokens x d x d_head per head.
double attention_flops(std::int64_t tokens, std::int64_t dim, std::int64_t heads);
// 4 ops per output pair per transformed axis.
double dwt_flops(double elements, int axes);
double hadamard_flops(double elements);
double grouped_contraction_flops(double outputs, std::int64_t group_dim);

enum class LayerKind { kMac, kAc };

struct LayerProfile {
  std::string name;
  double flops = 0;  // per sample, per time step
  double rate = 0;   // firing rate of the spikes feeding this layer
  std::int64_t timesteps = 1;
  LayerKind kind = LayerKind::kAc;
  // spiking sites whose rates feed this layer, weighted by element count
  std::vector<std::pair<std::string, double>> rate_sources;
};

struct EnergyConstants {
  double e_mac_pj = 4.6;
  double e_ac_pj = 0.9;
};

// R * T * FLOPs
double sop(const LayerProfile& layer);

struct EnergyEntry {
  std::string name;
  LayerKind kind = LayerKind::kAc;
  double flops = 0, rate = 0, sop = 0, pj = 0;
  std::int64_t timesteps = 1;
};

struct EnergyReport {
  std::vector<EnergyEntry> layers;
  double mac_pj = 0, ac_pj = 0, total_pj = 0;
  std::int64_t samples = 0;

  nlohmann::json to_json() const;
};

// The MAC layer costs e_mac * FLOPs * T (its input is dense); every other
// layer costs e_ac * SOP. Exactly one MAC layer is required.
EnergyReport total_energy(const std::vector<LayerProfile>& layers, const EnergyConstants& constants = {});

// Layer list for a configuration, rates unset. The hash and classifier heads
// are left out.
std::vector<LayerProfile> model_profile(const ModelConfig& config);

// Fills each layer's rate from the monitor. A layer whose sites never fired
// or were never visited gets 0.
void apply_rates(std::vector<LayerProfile>& layers, const SpikeMonitor& monitor);

// samples: [T, N, H, W, C]; evaluated in batches in inference mode.
EnergyReport profile_model(Model& model, const Tensor& samples, std::int64_t batch,
                           const EnergyConstants& constants = {});

}  // namespace snnhash
