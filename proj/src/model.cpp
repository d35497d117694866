#include "snnhash/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace snnhash {

ModelConfig ModelConfig::nano() {
  ModelConfig c;
  c.stages = {{BlockType::kSwm, 16, 1, true},
              {BlockType::kSwm, 24, 1, true},
              {BlockType::kSsa, 32, 1, true},
              {BlockType::kSsa, 32, 1, true}};
  return c;
}

std::vector<std::array<std::int64_t, 4>> ModelConfig::stage_shapes() const {
  std::vector<std::array<std::int64_t, 4>> out;
  std::int64_t h = height, w = width;
  for (const auto& s : stages) {
    if (s.maxpool) {
      h = (h - 1) / 2 + 1;
      w = (w - 1) / 2 + 1;
    }
    out.push_back({steps, h, w, s.dim});
  }
  return out;
}

std::int64_t ModelConfig::feature_dim() const { return stages.empty() ? stem_dim : stages.back().dim; }

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (steps < 1) fail("steps must be >= 1");
  if (in_channels < 1 || height < 1 || width < 1) fail("input extents must be positive");
  if (stem_dim < 1) fail("stem_dim must be positive");
  if (stages.empty()) fail("at least one stage is required");
  if (swm_dims != 2 && swm_dims != 3) fail("swm_dims must be 2 or 3");
  if (hash_bits < 1) fail("hash_bits must be positive");
  if (classes < 2) fail("classes must be >= 2");
  if (mlp_ratio < 1) fail("mlp_ratio must be >= 1");
  if (!(ssa_scale > 0.0)) fail("ssa_scale must be positive");
  if (!(swm_v_th > lif.v_reset)) fail("swm_v_th must exceed v_reset");
  try {
    lif.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  auto shapes = stage_shapes();
  std::int64_t prev = stem_dim;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& s = stages[i];
    const std::string tag = "stage " + std::to_string(i) + ": ";
    if (s.dim < prev) fail(tag + "dims must be nondecreasing (" + std::to_string(s.dim) + " < " + std::to_string(prev) + ")");
    if (s.blocks < 0) fail(tag + "negative block count");
    prev = s.dim;
    const auto& sh = shapes[i];
    if (sh[1] < 1 || sh[2] < 1) fail(tag + "spatial extent vanished");
    if (s.block == BlockType::kSwm && s.blocks > 0) {
      if (sh[1] % 4 || sh[2] % 4 || (swm_dims == 3 && steps % 4)) {
        fail(tag + "SWM needs T, H, W divisible by 4, got T=" + std::to_string(steps) + " H=" +
             std::to_string(sh[1]) + " W=" + std::to_string(sh[2]));
      }
      if (s.dim % swm_groups) fail(tag + "dim " + std::to_string(s.dim) + " not divisible by swm_groups " + std::to_string(swm_groups));
    }
    if (s.block == BlockType::kSsa && s.blocks > 0 && s.dim % ssa_heads) {
      fail(tag + "dim " + std::to_string(s.dim) + " not divisible by ssa_heads " + std::to_string(ssa_heads));
    }
  }
}

nlohmann::json config_to_json(const ModelConfig& c) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : c.stages) {
    stages.push_back({{"block", s.block == BlockType::kSwm ? "swm" : "ssa"},
                      {"dim", s.dim},
                      {"blocks", s.blocks},
                      {"maxpool", s.maxpool}});
  }
  return {{"steps", c.steps},
          {"in_channels", c.in_channels},
          {"height", c.height},
          {"width", c.width},
          {"stem_dim", c.stem_dim},
          {"stages", stages},
          {"swm_groups", c.swm_groups},
          {"swm_dims", c.swm_dims},
          {"swm_v_th", c.swm_v_th},
          {"ssa_heads", c.ssa_heads},
          {"ssa_scale", c.ssa_scale},
          {"mlp_ratio", c.mlp_ratio},
          {"hash_bits", c.hash_bits},
          {"classes", c.classes},
          {"hash_variant", c.hash_variant == HashVariant::kSpiking ? "spiking" : "tanh-sign"},
          {"stateless_neurons", c.stateless_neurons},
          {"lif",
           {{"gamma", c.lif.gamma},
            {"v_th", c.lif.v_th},
            {"v_reset", c.lif.v_reset},
            {"surrogate_width", c.lif.surrogate_width}}}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c = ModelConfig::nano();
  try {
    c.steps = j.value("steps", c.steps);
    c.in_channels = j.value("in_channels", c.in_channels);
    c.height = j.value("height", c.height);
    c.width = j.value("width", c.width);
    c.stem_dim = j.value("stem_dim", c.stem_dim);
    if (j.contains("stages")) {
      c.stages.clear();
      for (const auto& s : j.at("stages")) {
        StageConfig sc;
        const auto kind = s.value("block", std::string("swm"));
        if (kind != "swm" && kind != "ssa") throw ConfigError("model config: unknown block type '" + kind + "'");
        sc.block = kind == "swm" ? BlockType::kSwm : BlockType::kSsa;
        sc.dim = s.value("dim", sc.dim);
        sc.blocks = s.value("blocks", sc.blocks);
        sc.maxpool = s.value("maxpool", sc.maxpool);
        c.stages.push_back(sc);
      }
    }
    c.swm_groups = j.value("swm_groups", c.swm_groups);
    c.swm_dims = j.value("swm_dims", c.swm_dims);
    c.swm_v_th = j.value("swm_v_th", c.swm_v_th);
    c.ssa_heads = j.value("ssa_heads", c.ssa_heads);
    c.ssa_scale = j.value("ssa_scale", c.ssa_scale);
    c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
    c.hash_bits = j.value("hash_bits", c.hash_bits);
    c.classes = j.value("classes", c.classes);
    const auto hv = j.value("hash_variant", std::string("spiking"));
    if (hv != "spiking" && hv != "tanh-sign") throw ConfigError("model config: unknown hash_variant '" + hv + "'");
    c.hash_variant = hv == "spiking" ? HashVariant::kSpiking : HashVariant::kTanhSign;
    c.stateless_neurons = j.value("stateless_neurons", c.stateless_neurons);
    if (j.contains("lif")) {
      const auto& l = j.at("lif");
      c.lif.gamma = l.value("gamma", c.lif.gamma);
      c.lif.v_th = l.value("v_th", c.lif.v_th);
      c.lif.v_reset = l.value("v_reset", c.lif.v_reset);
      c.lif.surrogate_width = l.value("surrogate_width", c.lif.surrogate_width);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

RunContext make_context(const ModelConfig& config, bool train) {
  RunContext ctx;
  ctx.train = train;
  ctx.lif = config.lif;
  ctx.stateless_neurons = config.stateless_neurons;
  return ctx;
}

Model build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  Model m;
  m.config = config;
  m.seed = seed;
  m.stem_w = init_fan_in<float>({config.stem_dim, 3, 3, config.in_channels}, 9 * config.in_channels, 1.0, rng);
  m.stem_bn = BatchNorm<float>::make(config.stem_dim);
  auto shapes = config.stage_shapes();
  std::int64_t in = config.stem_dim;
  for (std::size_t i = 0; i < config.stages.size(); ++i) {
    const auto& sc = config.stages[i];
    Stage st;
    st.down_w = init_fan_in<float>({sc.dim, 3, 3, in}, 9 * in, 1.0, rng);
    st.down_bn = BatchNorm<float>::make(sc.dim);
    const auto& sh = shapes[i];
    for (int b = 0; b < sc.blocks; ++b) {
      if (sc.block == BlockType::kSwm) {
        auto swm = Swm<float>::make(sc.dim, sh[0], sh[1], sh[2], config.swm_groups, config.swm_dims, rng);
        swm.lif.v_th = config.swm_v_th;
        swm.lif.gamma = config.lif.gamma;
        swm.lif.v_reset = config.lif.v_reset;
        swm.lif.surrogate_width = config.lif.surrogate_width;
        st.swm_blocks.push_back({swm, Mlp<float>::make(sc.dim, sc.dim * config.mlp_ratio, rng)});
      } else {
        st.ssa_blocks.push_back({Ssa<float>::make(sc.dim, config.ssa_heads, config.ssa_scale, rng),
                                 Mlp<float>::make(sc.dim, sc.dim * config.mlp_ratio, rng)});
      }
    }
    m.stages.push_back(std::move(st));
    in = sc.dim;
  }
  m.hash_w = init_fan_in<float>({config.hash_bits, in}, in, 1.0, rng);
  // a constant drive of gamma*v_th fires on every step, so centering the bias
  // there starts the AND-reduced codes near half ones
  m.hash_b = Tensor::full({config.hash_bits}, static_cast<float>(config.lif.gamma * config.lif.v_th), true);
  m.cls_w = init_fan_in<float>({config.classes, config.hash_bits}, config.hash_bits, 1.0, rng);
  m.cls_b = Tensor::zeros({config.classes}, true);
  return m;
}

void Model::visit(const ParamVisitor<float>& f) {
  f("stem.weight", stem_w, ParamKind::kWeight);
  stem_bn.visit("stem.bn", f);
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const std::string p = "stage" + std::to_string(i);
    f(p + ".down.weight", stages[i].down_w, ParamKind::kWeight);
    stages[i].down_bn.visit(p + ".down.bn", f);
    for (std::size_t b = 0; b < stages[i].swm_blocks.size(); ++b)
      stages[i].swm_blocks[b].visit(p + ".block" + std::to_string(b), f);
    for (std::size_t b = 0; b < stages[i].ssa_blocks.size(); ++b)
      stages[i].ssa_blocks[b].visit(p + ".block" + std::to_string(b), f);
  }
  f("hash.weight", hash_w, ParamKind::kWeight);
  f("hash.bias", hash_b, ParamKind::kNorm);
  f("cls.weight", cls_w, ParamKind::kWeight);
  f("cls.bias", cls_b, ParamKind::kNorm);
}

std::vector<Param> Model::parameters() {
  std::vector<Param> out;
  visit([&](const std::string& name, Tensor& t, ParamKind kind) {
    if (kind != ParamKind::kBuffer) out.push_back({name, t, kind == ParamKind::kWeight});
  });
  return out;
}

NamedTensors Model::state() {
  NamedTensors out;
  visit([&](const std::string& name, Tensor& t, ParamKind) { out.emplace_back(name, t); });
  return out;
}

void Model::load_state(const NamedTensors& tensors) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [n, t] : tensors) by_name[n] = &t;
  std::size_t used = 0;
  visit([&](const std::string& name, Tensor& t, ParamKind) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint: missing tensor '" + name + "'");
    if (it->second->shape() != t.shape()) {
      throw FormatError("checkpoint: tensor '" + name + "' has shape " + shape_str(it->second->shape()) +
                        ", model expects " + shape_str(t.shape()));
    }
    std::copy(it->second->data().begin(), it->second->data().end(), t.mutable_data().begin());
    ++used;
  });
  if (used != tensors.size()) throw FormatError("checkpoint: unexpected extra tensors");
}

std::int64_t Model::parameter_count() {
  std::int64_t n = 0;
  for (const auto& p : parameters()) n += p.value.size();
  return n;
}

namespace {

Tensor fold_time(const Tensor& x) {
  Shape s(x.shape().begin() + 1, x.shape().end());
  s[0] *= x.shape()[0];
  return ops::reshape(x, s);
}

Tensor unfold_time(const Tensor& x, std::int64_t steps) {
  Shape s = x.shape();
  s[0] /= steps;
  s.insert(s.begin(), steps);
  return ops::reshape(x, s);
}

}  // namespace

Tensor forward_features(Model& m, const Tensor& x, const RunContext& ctx) {
  const auto& c = m.config;
  if (x.rank() != 5 || x.shape()[0] != c.steps || x.shape()[2] != c.height || x.shape()[3] != c.width ||
      x.shape()[4] != c.in_channels) {
    throw ShapeError("forward: input " + shape_str(x.shape()) + " does not match [T=" + std::to_string(c.steps) +
                     ", B, " + std::to_string(c.height) + ", " + std::to_string(c.width) + ", " +
                     std::to_string(c.in_channels) + "]");
  }
  const std::int64_t T = c.steps;
  auto y = m.stem_bn(ops::conv2d(fold_time(x), m.stem_w, 1), ctx);
  y = unfold_time(y, T);
  for (std::size_t i = 0; i < m.stages.size(); ++i) {
    auto& st = m.stages[i];
    const std::string p = "stage" + std::to_string(i);
    auto s = spike(y, ctx, p + ".down.sn");
    auto z = st.down_bn(ops::conv2d(fold_time(s), st.down_w, 1), ctx);
    if (c.stages[i].maxpool) z = ops::maxpool2d(z);
    y = unfold_time(z, T);
    for (std::size_t b = 0; b < st.swm_blocks.size(); ++b) y = st.swm_blocks[b](y, ctx, p + ".block" + std::to_string(b));
    for (std::size_t b = 0; b < st.ssa_blocks.size(); ++b) y = st.ssa_blocks[b](y, ctx, p + ".block" + std::to_string(b));
  }
  return ops::mean(y, {2, 3});
}

Tensor and_over_time(const Tensor& spikes) {
  if (spikes.rank() < 1 || spikes.shape()[0] < 1) throw ShapeError("and_over_time: empty time axis");
  Tensor code = ops::slice(spikes, 0, 0, 1);
  for (std::int64_t t = 1; t < spikes.shape()[0]; ++t) code = ops::hadamard_multiply(code, ops::slice(spikes, 0, t, 1));
  return ops::reshape(code, Shape(spikes.shape().begin() + 1, spikes.shape().end()));
}

SpikingHash hash_layer_spiking(const Tensor& f, const Tensor& w, const Tensor& b, const RunContext& ctx) {
  if (f.rank() != 3) throw ShapeError("hash_layer_spiking: expected [T, B, C], got " + shape_str(f.shape()));
  auto z = ops::linear(f, w, b);
  SpikingHash out;
  if (ctx.stateless_neurons) {
    auto r = lif_step(z, lif_initial_state<float>(z.shape(), ctx.lif), ctx.lif);
    out.spikes = r.S;
    NoGradGuard ng;
    out.mean_potential = ops::mean(r.state.H.detach(), {0});
    if (auto* mon = SpikeMonitor::active()) mon->record("hash.sn", r.S);
  } else {
    auto seq = lif_sequence(z, ctx.lif, true, "hash.sn");
    out.spikes = seq.S;
    out.mean_potential = seq.mean_potential;
  }
  out.code = and_over_time(out.spikes);
  return out;
}

TanhHash hash_layer_tanh_sign(const Tensor& f_mean, const Tensor& w, const Tensor& b) {
  TanhHash out;
  out.relaxed = ops::tanh(ops::linear(f_mean, w, b));
  std::vector<float> bits(out.relaxed.data().size());
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = out.relaxed.data()[i] >= 0.0f ? 1.0f : 0.0f;
  out.code = Tensor(out.relaxed.shape(), std::move(bits));
  return out;
}

Tensor classify(const Tensor& input, const Tensor& w, const Tensor& b) {
  auto logits = ops::linear(input, w, b);
  const std::int64_t K = logits.shape().back();
  const std::int64_t rows = logits.size() / K;
  Shape keep = logits.shape();
  keep.back() = 1;
  std::vector<float> mx(static_cast<std::size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) {
    auto row = logits.data().subspan(static_cast<std::size_t>(r * K), static_cast<std::size_t>(K));
    mx[static_cast<std::size_t>(r)] = *std::max_element(row.begin(), row.end());
  }
  auto shifted = ops::subtract(logits, Tensor(keep, std::move(mx)));
  auto lse = ops::log(ops::sum(ops::exp(shifted), {-1}, true));
  return ops::subtract(shifted, lse);
}

std::vector<float> softmax_row(std::span<const float> logits) {
  const float mx = *std::max_element(logits.begin(), logits.end());
  std::vector<float> p(logits.size());
  double z = 0;
  for (std::size_t i = 0; i < p.size(); ++i) z += std::exp(static_cast<double>(logits[i] - mx));
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<float>(std::exp(static_cast<double>(logits[i] - mx)) / z);
  return p;
}

ForwardOutput forward(Model& m, const Tensor& x, const RunContext& ctx) {
  ForwardOutput out;
  out.features = forward_features(m, x, ctx);
  if (m.config.hash_variant == HashVariant::kSpiking) {
    auto h = hash_layer_spiking(out.features, m.hash_w, m.hash_b, ctx);
    out.code = h.code.detach();
    out.signed_codes = ops::subtract(ops::scalar_scale(h.code, 2.0), Tensor::scalar(1.0f));
    out.mean_potential = h.mean_potential;
    out.hash_spike_rate = ops::mean(h.spikes, {0});
    out.log_probs = classify(out.hash_spike_rate, m.cls_w, m.cls_b);
  } else {
    auto h = hash_layer_tanh_sign(ops::mean(out.features, {0}), m.hash_w, m.hash_b);
    out.code = h.code;
    out.signed_codes = h.relaxed;
    out.mean_potential = h.relaxed.detach();
    out.hash_spike_rate = h.relaxed.detach();
    out.log_probs = classify(h.relaxed, m.cls_w, m.cls_b);
  }
  return out;
}

std::vector<std::uint8_t> pack_bits(std::span<const float> bits) {
  std::vector<std::uint8_t> out((bits.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] != 0.0f && bits[i] != 1.0f) throw DomainError("pack_bits: non-binary value at " + std::to_string(i));
    if (bits[i] == 1.0f) out[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  }
  return out;
}

std::vector<float> unpack_bits(std::span<const std::uint8_t> packed, std::int64_t length) {
  if (static_cast<std::size_t>((length + 7) / 8) > packed.size()) throw ShapeError("unpack_bits: too few bytes");
  std::vector<float> out(static_cast<std::size_t>(length));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (packed[i / 8] >> (i % 8)) & 1u ? 1.0f : 0.0f;
  return out;
}

}  // namespace snnhash
