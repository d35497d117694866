#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "snnhash/layers.hpp"
#include "snnhash/optim.hpp"
#include "snnhash/serialize.hpp"
#include "snnhash/ssa.hpp"
#include "snnhash/swm.hpp"

namespace snnhash {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class BlockType { kSwm, kSsa };
enum class HashVariant { kSpiking, kTanhSign };

struct StageConfig {
  BlockType block = BlockType::kSwm;
  std::int64_t dim = 16;
  int blocks = 1;
  bool maxpool = true;  // downsample is [SN; Conv3x3; BN] plus optional MaxPool
};

struct ModelConfig {
  std::int64_t steps = 4;
  std::int64_t in_channels = 1;
  std::int64_t height = 32;
  std::int64_t width = 32;
  std::int64_t stem_dim = 8;
  std::vector<StageConfig> stages;
  std::int64_t swm_groups = 4;
  int swm_dims = 3;  // 2 = per-step 2D transform
  double swm_v_th = Swm<float>::default_lif().v_th;
  std::int64_t ssa_heads = 2;
  double ssa_scale = 0.125;
  std::int64_t mlp_ratio = 2;
  std::int64_t hash_bits = 16;
  std::int64_t classes = 3;
  HashVariant hash_variant = HashVariant::kSpiking;
  // every spiking site resets each step: the network becomes a per-frame map
  bool stateless_neurons = false;
  LifParams lif;

  // stages [SWM 16, SWM 24, SSA 32, SSA 32], one block each, T=4, 1x32x32
  static ModelConfig nano();

  void validate() const;
  // [T, H, W, C] entering each stage's blocks
  std::vector<std::array<std::int64_t, 4>> stage_shapes() const;
  std::int64_t feature_dim() const;
};

nlohmann::json config_to_json(const ModelConfig& c);
ModelConfig config_from_json(const nlohmann::json& j);

struct Stage {
  Tensor down_w;  // [dim, 3, 3, in]
  BatchNorm<float> down_bn;
  std::vector<WaveformerBlock<float>> swm_blocks;
  std::vector<TransformerBlock<float>> ssa_blocks;
};

struct Model {
  ModelConfig config;
  std::uint64_t seed = 0;
  Tensor stem_w;  // [stem_dim, 3, 3, in_channels]
  BatchNorm<float> stem_bn;
  std::vector<Stage> stages;
  Tensor hash_w, hash_b;  // [L, C], [L]
  Tensor cls_w, cls_b;    // [classes, L], [classes]

  void visit(const ParamVisitor<float>& f);
  // trainable tensors in registry order
  std::vector<Param> parameters();
  // every tensor including batchnorm buffers, in registry order
  NamedTensors state();
  void load_state(const NamedTensors& tensors);
  std::int64_t parameter_count();
};

// Run context carrying the config's neuron settings.
RunContext make_context(const ModelConfig& config, bool train);

// Deterministic from (config, seed).
Model build_model(const ModelConfig& config, std::uint64_t seed);

// x: [T, B, H, W, C_in] -> features [T, B, C_last] (spatial average kept per step).
Tensor forward_features(Model& m, const Tensor& x, const RunContext& ctx);

struct SpikingHash {
  Tensor spikes;          // [T, B, L]
  Tensor code;            // [B, L], product of spikes over T (AND on {0,1})
  Tensor mean_potential;  // [B, L], time-averaged pre-spike potential, detached
};

// Product over the leading (time) axis: logical AND on {0,1}, differentiable.
Tensor and_over_time(const Tensor& spikes);

// Linear shared across steps, LIF over T, AND-reduction by product.
SpikingHash hash_layer_spiking(const Tensor& features, const Tensor& w, const Tensor& b, const RunContext& ctx);

struct TanhHash {
  Tensor relaxed;  // tanh(Linear(f_mean)), differentiable
  Tensor code;     // {0,1}, sgn(0) = +1
};
TanhHash hash_layer_tanh_sign(const Tensor& f_mean, const Tensor& w, const Tensor& b);

// Affine map then log-softmax over the last axis.
Tensor classify(const Tensor& input, const Tensor& w, const Tensor& b);
std::vector<float> softmax_row(std::span<const float> logits);

struct ForwardOutput {
  Tensor features;        // [T, B, C]
  Tensor signed_codes;    // [B, L] in the +-1 view, differentiable
  Tensor code;            // [B, L] {0,1}
  Tensor mean_potential;  // [B, L] (spiking) or relaxed codes (tanh-sign), detached
  Tensor log_probs;       // [B, classes]
  Tensor hash_spike_rate; // [B, L] time-averaged hash spikes (spiking variant)
};

ForwardOutput forward(Model& m, const Tensor& x, const RunContext& ctx);

// Hash codes as bit vectors; bit i of an item lives in byte i/8 at position i%8.
std::vector<std::uint8_t> pack_bits(std::span<const float> bits);
std::vector<float> unpack_bits(std::span<const std::uint8_t> packed, std::int64_t length);

}  // namespace snnhash
