#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "snnhash/ops.hpp"
#include "snnhash/tensor.hpp"

namespace snnhash {

struct LifParams {
  double gamma = 2.0;
  double v_th = 1.0;
  double v_reset = 0.0;
  double surrogate_width = 2.0;
  // Stop gradient through S on the reset path. Gradient checks turn this off
  // so the surrogate-forward program is the function being differentiated.
  bool detach_reset = true;

  void validate() const;
  ops::SurrogateSpec surrogate() const { return {v_th, surrogate_width}; }
};

template <typename T>
struct LifState {
  BasicTensor<T> V;
  BasicTensor<T> H;  // pre-spike potential of the latest step (undefined before the first)
};

template <typename T>
LifState<T> lif_initial_state(const Shape& shape, const LifParams& p);

template <typename T>
struct LifStep {
  BasicTensor<T> S;
  LifState<T> state;
};

// H = V + (I - (V - V_reset)) / gamma; S = [H >= v_th]; V' = V_reset S + H (1 - S).
template <typename T>
LifStep<T> lif_step(const BasicTensor<T>& I, const LifState<T>& state, const LifParams& p);

template <typename T>
struct LifSequence {
  BasicTensor<T> S;               // [T, ...]
  BasicTensor<T> mean_potential;  // [...], detached; only when recorded
  LifState<T> final_state;
};

// Folds lif_step over the leading axis starting from V = V_reset. Spike
// counts are reported to the active SpikeMonitor under `site`.
template <typename T>
LifSequence<T> lif_sequence(const BasicTensor<T>& I, const LifParams& p, bool record = false,
                            const std::string& site = "");

// Every step starts from V_reset (no membrane carry-over), so the map commutes
// with any permutation of the leading axis.
template <typename T>
BasicTensor<T> lif_stateless(const BasicTensor<T>& I, const LifParams& p, const std::string& site = "");

// Spike accounting per named site, collected while a SpikeMonitor is active on
// the current thread.
struct SiteStats {
  double spikes = 0;
  double slots = 0;
  std::int64_t non_binary = 0;
  std::int64_t calls = 0;

  double rate() const { return slots > 0 ? spikes / slots : 0.0; }
};

class SpikeMonitor {
 public:
  SpikeMonitor();
  ~SpikeMonitor();
  SpikeMonitor(const SpikeMonitor&) = delete;
  SpikeMonitor& operator=(const SpikeMonitor&) = delete;

  const std::map<std::string, SiteStats>& sites() const { return sites_; }
  SiteStats total() const;
  void clear() { sites_.clear(); }

  static SpikeMonitor* active();
  template <typename T>
  void record(const std::string& site, const BasicTensor<T>& spikes);

 private:
  std::map<std::string, SiteStats> sites_;
  SpikeMonitor* previous_;
};

}  // namespace snnhash
