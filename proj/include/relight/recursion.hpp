#ifndef RELIGHT_RECURSION_HPP
#define RELIGHT_RECURSION_HPP

#include <utility>
#include <vector>

#include "relight/actnet.hpp"
#include "relight/imgstats.hpp"
#include "relight/types.hpp"

namespace relight {

/// One brightness-correction pass: E' = E + m*E*(1-E), elementwise.
/// Closed on [0,1] (E*(2-E) <= 1), with 0 and 1 as fixed points; m = 0 is the
/// identity. The final clamp only absorbs float rounding at the boundary.
template <typename S>
Planes<S> correction_step(const Planes<S>& e, const Planes<S>& m) {
  if (!e.same_shape(m)) throw ContractError("correction_step: shape mismatch");
  Planes<S> out = e;
  out.mat().array() +=
      m.mat().array() * e.mat().array() * (S(1) - e.mat().array());
  out.mat() = out.mat().cwiseMax(S(0)).cwiseMin(S(1));
  return out;
}

/// Accumulates d_e += d_out * (1 + m - 2*m*E) and d_m += d_out * E * (1 - E).
template <typename S>
void correction_step_backward(const Planes<S>& e, const Planes<S>& m,
                              const Planes<S>& d_out, Planes<S>* d_e,
                              Planes<S>* d_m) {
  if (d_e)
    d_e->mat().array() += d_out.mat().array() *
                          (S(1) + m.mat().array() * (S(1) - S(2) * e.mat().array()));
  if (d_m)
    d_m->mat().array() +=
        d_out.mat().array() * e.mat().array() * (S(1) - e.mat().array());
}

/// E_0 .. E_N plus the per-step curve maps, all at the native image size.
template <typename S>
struct EnhancementTrace {
  std::vector<Planes<S>> images;  // N + 1 entries
  std::vector<Planes<S>> maps;    // N entries
  int iterations = 0;
};

/// One enhancement pass at native size: pad to a multiple of 4, run ACT-Net,
/// apply the correction, crop back. Returns (E_next, curve map).
template <typename S>
std::pair<Planes<S>, Planes<S>> enhance_once(const Planes<S>& e,
                                             const ActNetParams<S>& act) {
  const Planes<S> padded = pad_to_multiple(e, 4);
  const Planes<S> map = act_forward(padded, act);
  Planes<S> next = crop_topleft(correction_step(padded, map), e.height(), e.width());
  return {std::move(next), crop_topleft(map, e.height(), e.width())};
}

template <typename S>
EnhancementTrace<S> enhance_recursive(const Planes<S>& x,
                                      const ActNetParams<S>& act, int n,
                                      int hard_cap = 10) {
  if (n < 1) throw ContractError("enhance_recursive: need N >= 1");
  if (n > hard_cap) throw ContractError("enhance_recursive: N exceeds hard cap");
  EnhancementTrace<S> trace;
  trace.iterations = n;
  trace.images.reserve(n + 1);
  trace.maps.reserve(n);
  trace.images.push_back(x);
  for (int i = 0; i < n; ++i) {
    auto [next, map] = enhance_once(trace.images.back(), act);
    trace.images.push_back(std::move(next));
    trace.maps.push_back(std::move(map));
  }
  return trace;
}

/// Pseudo-label: iterate a frozen one-step enhancer until the mean V-channel
/// brightness reaches `threshold`, capped at `cap` iterations. Images already
/// at or above the threshold get label 1.
template <typename S, typename StepFn>
int pseudo_label_loop(const Planes<S>& x, StepFn&& step, double threshold,
                      int cap) {
  if (threshold <= 0 || threshold > 1)
    throw ContractError("pseudo_label_loop: threshold must be in (0,1]");
  if (cap < 1) throw ContractError("pseudo_label_loop: cap must be >= 1");
  Planes<S> e = x;
  int count = 0;
  while (static_cast<double>(mean_brightness(e)) < threshold && count < cap) {
    e = step(e);
    ++count;
  }
  return std::max(count, 1);
}

template <typename S>
int generate_pseudo_label(const Planes<S>& x, const ActNetParams<S>& act,
                          double threshold, int cap) {
  return pseudo_label_loop(
      x, [&act](const Planes<S>& e) { return enhance_once(e, act).first; },
      threshold, cap);
}

}  // namespace relight

#endif  // RELIGHT_RECURSION_HPP
