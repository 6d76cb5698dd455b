#ifndef RELIGHT_BPNET_HPP
#define RELIGHT_BPNET_HPP

#include <vector>

#include "relight/imgstats.hpp"
#include "relight/nnops.hpp"
#include "relight/types.hpp"

namespace relight {

/// Inclusive range of recursive enhancement counts.
struct RecursionBounds {
  int rho_min = 1;
  int rho_max = 10;

  void validate() const {
    if (rho_min < 1 || rho_min > rho_max)
      throw ContractError("RecursionBounds: need 1 <= rho_min <= rho_max");
  }
};

/// Continuous recursion factor plus its integer iteration count.
/// Rounding is half-up, so ties prefer one more enhancement pass.
template <typename S>
struct RecursiveFactor {
  S value;
  int rounded;
};

inline int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

template <typename S>
struct BpNetParams {
  Dense<S> fc1, fc2, fc3;  // 256 -> 128 -> 64 -> 1

  static BpNetParams init(std::uint64_t seed) {
    Rng rng(seed);
    BpNetParams p;
    p.fc1 = Dense<S>::make(kHistogramBins, 128, &rng);
    p.fc2 = Dense<S>::make(128, 64, &rng);
    p.fc3 = Dense<S>::make(64, 1, &rng);
    return p;
  }

  static BpNetParams zeros_like() {
    BpNetParams p = init(0);
    for (auto& v : tensors(p)) Eigen::Map<Vec<S>>(v.data, v.size()).setZero();
    return p;
  }
};

template <typename S>
std::vector<TensorView<S>> tensors(BpNetParams<S>& p) {
  std::vector<TensorView<S>> out;
  collect(p.fc1, "fc1", out);
  collect(p.fc2, "fc2", out);
  collect(p.fc3, "fc3", out);
  return out;
}

template <typename S>
struct BpWorkspace {
  Vec<S> hist, h1, h2;
  S sig = 0;  // sigmoid output before the affine rescale
};

/// sigmoid(FC3(ReLU(FC2(ReLU(FC1(hist)))))) rescaled onto [rho_min, rho_max].
template <typename S>
RecursiveFactor<S> bp_forward(const Vec<S>& hist, const BpNetParams<S>& p,
                              const RecursionBounds& bounds,
                              BpWorkspace<S>* ws = nullptr) {
  bounds.validate();
  if (hist.size() != kHistogramBins)
    throw ContractError("bp_forward: histogram must have 256 bins");
  BpWorkspace<S> local;
  BpWorkspace<S>& s = ws ? *ws : local;
  s.hist = hist;
  s.h1 = dense_forward(hist, p.fc1).cwiseMax(S(0));
  s.h2 = dense_forward(s.h1, p.fc2).cwiseMax(S(0));
  const S z = dense_forward(s.h2, p.fc3)(0);
  s.sig = S(1) / (S(1) + std::exp(-z));
  RecursiveFactor<S> out;
  out.value = S(bounds.rho_min) + s.sig * S(bounds.rho_max - bounds.rho_min);
  out.rounded = round_half_up(static_cast<double>(out.value));
  if (out.rounded < bounds.rho_min) out.rounded = bounds.rho_min;
  if (out.rounded > bounds.rho_max) out.rounded = bounds.rho_max;
  return out;
}

template <typename S>
void bp_backward(const BpNetParams<S>& p, const BpWorkspace<S>& s,
                 const RecursionBounds& bounds, S d_value, BpNetParams<S>& g) {
  Vec<S> d_z(1);
  d_z(0) = d_value * S(bounds.rho_max - bounds.rho_min) * s.sig * (S(1) - s.sig);
  Vec<S> d_h2 = Vec<S>::Zero(s.h2.size());
  dense_backward(s.h2, p.fc3, d_z, g.fc3, &d_h2);
  d_h2.array() *= (s.h2.array() > S(0)).template cast<S>();
  Vec<S> d_h1 = Vec<S>::Zero(s.h1.size());
  dense_backward(s.h1, p.fc2, d_h2, g.fc2, &d_h1);
  d_h1.array() *= (s.h1.array() > S(0)).template cast<S>();
  dense_backward(s.hist, p.fc1, d_h1, g.fc1, static_cast<Vec<S>*>(nullptr));
}

/// L1 between the continuous factor and the integer pseudo-label.
template <typename S>
S perception_loss(const RecursiveFactor<S>& factor, int label) {
  if (label < 1) throw ContractError("perception_loss: label must be positive");
  return std::abs(factor.value - S(label));
}

}  // namespace relight

#endif  // RELIGHT_BPNET_HPP
