#include "snnhash/lif.hpp"

#include <memory>
#include <stdexcept>

#include "ops_internal.hpp"

namespace snnhash {

void LifParams::validate() const {
  if (!(gamma > 0.0)) throw std::invalid_argument("lif: gamma must be positive");
  if (!(surrogate_width > 0.0)) throw std::invalid_argument("lif: surrogate width must be positive");
  if (!(v_th > v_reset)) throw std::invalid_argument("lif: v_th must exceed v_reset");
}

template <typename T>
LifState<T> lif_initial_state(const Shape& shape, const LifParams& p) {
  return {BasicTensor<T>::full(shape, static_cast<T>(p.v_reset)), {}};
}

template <typename T>
LifStep<T> lif_step(const BasicTensor<T>& I, const LifState<T>& state, const LifParams& p) {
  if (I.shape() != state.V.shape()) {
    throw ShapeError("lif_step: input " + shape_str(I.shape()) + " does not match membrane " +
                     shape_str(state.V.shape()));
  }
  const auto vr = BasicTensor<T>::scalar(static_cast<T>(p.v_reset));
  auto H = ops::add(state.V, ops::scalar_scale(ops::subtract(I, ops::subtract(state.V, vr)), 1.0 / p.gamma));
  auto S = ops::heaviside_with_surrogate(H, p.surrogate());
  auto Sr = p.detach_reset ? S.detach() : S;
  auto keep = ops::subtract(BasicTensor<T>::scalar(T(1)), Sr);
  auto V = ops::add(ops::scalar_scale(Sr, p.v_reset), ops::hadamard_multiply(H, keep));
  return {S, {V, H}};
}

namespace {

// The whole recurrence as one graph node. Forward repeats lif_step's float
// arithmetic op for op, so spikes match the composed version bit for bit.
// `hs` receives every step's H.
template <typename T>
BasicTensor<T> lif_fused(const BasicTensor<T>& I, std::int64_t steps, const LifParams& p,
                         std::shared_ptr<std::vector<T>> hs, std::vector<T>* v_final) {
  const auto n = static_cast<std::size_t>(I.size() / steps);
  const T vr = static_cast<T>(p.v_reset);
  const T ig = static_cast<T>(1.0 / p.gamma);
  const T th = static_cast<T>(p.v_th);
  const auto spec = p.surrogate();
  const bool smooth = ops::surrogate_forward_enabled();
  auto in = I.data();
  std::vector<T> out(in.size());
  hs->resize(in.size());
  std::vector<T> v(n, vr);
  for (std::int64_t t = 0; t < steps; ++t) {
    const std::size_t off = static_cast<std::size_t>(t) * n;
    for (std::size_t i = 0; i < n; ++i) {
      const T h = v[i] + (in[off + i] - (v[i] - vr)) * ig;
      const T sp = smooth ? static_cast<T>(ops::surrogate_value(static_cast<double>(h), spec)) : (h >= th ? T(1) : T(0));
      (*hs)[off + i] = h;
      out[off + i] = sp;
      v[i] = sp * vr + h * (T(1) - sp);
    }
  }
  if (v_final) *v_final = std::move(v);
  const bool detach = p.detach_reset;
  return detail::make_result<T>(
      I.shape(), std::move(out), "lif", {I},
      [hs, steps, n, vr, ig, spec, detach, smooth](std::span<const T> g, const typename GradNode<T>::Inputs& inputs) {
        auto gi = inputs[0]->grad_buffer();
        // spikes are recomputed from H rather than stored twice
        const T th = static_cast<T>(spec.v_th);
        std::vector<T> gv(n, T(0));
        for (std::int64_t t = steps - 1; t >= 0; --t) {
          const std::size_t off = static_cast<std::size_t>(t) * n;
          for (std::size_t i = 0; i < n; ++i) {
            const T h = (*hs)[off + i];
            const T sp = smooth ? static_cast<T>(ops::surrogate_value(static_cast<double>(h), spec))
                                : (h >= th ? T(1) : T(0));
            T gs = g[off + i];
            if (!detach) gs += gv[i] * (vr - h);
            const T gh = gv[i] * (T(1) - sp) + gs * static_cast<T>(ops::surrogate_grad(static_cast<double>(h), spec));
            gi[off + i] += gh * ig;
            gv[i] = gh * (T(1) - ig);
          }
        }
      });
}

}  // namespace

template <typename T>
LifSequence<T> lif_sequence(const BasicTensor<T>& I, const LifParams& p, bool record, const std::string& site) {
  p.validate();
  if (I.rank() < 1 || I.shape()[0] < 1) throw ShapeError("lif_sequence: need a leading time axis of length >= 1");
  const std::int64_t steps = I.shape()[0];
  Shape step_shape = I.shape();
  step_shape[0] = 1;
  auto hs = std::make_shared<std::vector<T>>();
  std::vector<T> v_final;
  LifSequence<T> out;
  out.S = lif_fused(I, steps, p, hs, &v_final);
  const auto n = static_cast<std::size_t>(I.size() / steps);
  // the final state is a readout; it carries no graph
  out.final_state.V = BasicTensor<T>(step_shape, std::move(v_final));
  out.final_state.H = BasicTensor<T>(step_shape, std::vector<T>(hs->end() - static_cast<std::ptrdiff_t>(n), hs->end()));
  if (record) {
    Shape mp_shape(I.shape().begin() + 1, I.shape().end());
    if (mp_shape.empty()) mp_shape.push_back(1);
    std::vector<T> mp(n, T(0));
    // same summation order as mean over axis 0
    for (std::int64_t t = 0; t < steps; ++t)
      for (std::size_t i = 0; i < n; ++i) mp[i] += (*hs)[static_cast<std::size_t>(t) * n + i];
    for (auto& m : mp) m = m / static_cast<T>(steps);
    out.mean_potential = BasicTensor<T>(mp_shape, std::move(mp));
  }
  if (auto* mon = SpikeMonitor::active()) mon->record(site, out.S);
  return out;
}

template <typename T>
BasicTensor<T> lif_stateless(const BasicTensor<T>& I, const LifParams& p, const std::string& site) {
  p.validate();
  // one step from V = V_reset applied to the whole tensor at once
  auto S = lif_fused<T>(I, 1, p, std::make_shared<std::vector<T>>(), nullptr);
  if (auto* mon = SpikeMonitor::active()) mon->record(site, S);
  return S;
}

namespace {
thread_local SpikeMonitor* g_monitor = nullptr;
}

SpikeMonitor::SpikeMonitor() : previous_(g_monitor) { g_monitor = this; }
SpikeMonitor::~SpikeMonitor() { g_monitor = previous_; }
SpikeMonitor* SpikeMonitor::active() { return g_monitor; }

SiteStats SpikeMonitor::total() const {
  SiteStats t;
  for (const auto& [name, s] : sites_) {
    t.spikes += s.spikes;
    t.slots += s.slots;
    t.non_binary += s.non_binary;
    t.calls += s.calls;
  }
  return t;
}

template <typename T>
void SpikeMonitor::record(const std::string& site, const BasicTensor<T>& spikes) {
  auto& s = sites_[site];
  double ones = 0;
  for (T v : spikes.data()) {
    if (v == T(1)) {
      ones += 1;
    } else if (v != T(0)) {
      ++s.non_binary;
    }
  }
  s.spikes += ones;
  s.slots += static_cast<double>(spikes.size());
  ++s.calls;
}

#define SNNHASH_LIF(T)                                                                                   \
  template LifState<T> lif_initial_state<T>(const Shape&, const LifParams&);                             \
  template LifStep<T> lif_step(const BasicTensor<T>&, const LifState<T>&, const LifParams&);             \
  template LifSequence<T> lif_sequence(const BasicTensor<T>&, const LifParams&, bool, const std::string&); \
  template BasicTensor<T> lif_stateless(const BasicTensor<T>&, const LifParams&, const std::string&);     \
  template void SpikeMonitor::record(const std::string&, const BasicTensor<T>&);

SNNHASH_INSTANTIATE(SNNHASH_LIF)

}  // namespace snnhash
