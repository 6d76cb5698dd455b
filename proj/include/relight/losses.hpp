#ifndef RELIGHT_LOSSES_HPP
#define RELIGHT_LOSSES_HPP

#include <vector>

#include "relight/imgstats.hpp"
#include "relight/types.hpp"

namespace relight {

struct LossWeights {
  double w_exp = 1.0;
  double w_col = 0.5;
  double w_tv = 200.0;
  double w_p = 0.001;

  void validate() const {
    if (w_exp < 0 || w_col < 0 || w_tv < 0 || w_p < 0)
      throw ContractError("LossWeights: weights must be nonnegative");
  }
};

struct ExposureTarget {
  double level = 0.6;  // well-exposedness target E
  int patch = 16;

  void validate() const {
    if (level <= 0 || level > 1)
      throw ContractError("ExposureTarget: level must be in (0,1]");
    if (patch < 1) throw ContractError("ExposureTarget: patch must be >= 1");
  }
};

/// How patch brightness is measured for the exposure loss.
enum class ExposureChannel { kRgbMean, kVChannel };

namespace detail {
template <typename S>
int sign_of(S v) {
  return (v > S(0)) - (v < S(0));
}
}  // namespace detail

/// Mean absolute deviation of non-overlapping patch means from the target
/// exposure level.
template <typename S>
S exposure_loss(const Planes<S>& enh, const ExposureTarget& target,
                ExposureChannel channel = ExposureChannel::kRgbMean) {
  target.validate();
  std::vector<S> means;
  if (channel == ExposureChannel::kVChannel) {
    Planes<S> v(enh.height(), enh.width(), 1);
    v.plane(0) = rgb_to_v(enh);
    means = patch_means(v, target.patch);
  } else {
    means = patch_means(enh, target.patch);
  }
  S sum = 0;
  for (S m : means) sum += std::abs(m - S(target.level));
  return sum / S(means.size());
}

/// Accumulates scale * dL/d(enh) into d_enh.
template <typename S>
void exposure_loss_backward(const Planes<S>& enh, const ExposureTarget& target,
                            ExposureChannel channel, S scale, Planes<S>& d_enh) {
  const Index ph = target.patch;
  const Index n_tiles = ((enh.height() + ph - 1) / ph) * ((enh.width() + ph - 1) / ph);
  const bool on_v = channel == ExposureChannel::kVChannel;
  Mat<S> v;
  if (on_v) v = rgb_to_v(enh);
  for (Index ty = 0; ty < enh.height(); ty += ph) {
    const Index th = std::min(ph, enh.height() - ty);
    for (Index tx = 0; tx < enh.width(); tx += ph) {
      const Index tw = std::min(ph, enh.width() - tx);
      S mean = 0;
      if (on_v) {
        mean = v.block(ty, tx, th, tw).mean();
      } else {
        for (Index c = 0; c < enh.channels(); ++c)
          mean += enh.plane(c).block(ty, tx, th, tw).sum();
        mean /= S(th * tw * enh.channels());
      }
      const S g = scale * S(detail::sign_of(mean - S(target.level))) / S(n_tiles);
      if (on_v) {
        // V is the channel max; the subgradient lands on the max channel.
        const S per = g / S(th * tw);
        for (Index y = ty; y < ty + th; ++y)
          for (Index x = tx; x < tx + tw; ++x) {
            Index best = 0;
            for (Index c = 1; c < enh.channels(); ++c)
              if (enh.at(y, x, c) > enh.at(y, x, best)) best = c;
            d_enh.at(y, x, best) += per;
          }
      } else {
        const S per = g / S(th * tw * enh.channels());
        for (Index c = 0; c < enh.channels(); ++c)
          d_enh.plane(c).block(ty, tx, th, tw).array() += per;
      }
    }
  }
}

/// Sum of squared differences between the global channel means, over the
/// (R,G), (R,B), (G,B) pairs.
template <typename S>
S color_constancy_loss(const Planes<S>& enh) {
  if (enh.channels() != 3)
    throw ContractError("color_constancy_loss: need 3 channels");
  const S jr = enh.plane(0).mean(), jg = enh.plane(1).mean(), jb = enh.plane(2).mean();
  return (jr - jg) * (jr - jg) + (jr - jb) * (jr - jb) + (jg - jb) * (jg - jb);
}

template <typename S>
void color_constancy_loss_backward(const Planes<S>& enh, S scale,
                                   Planes<S>& d_enh) {
  const S jr = enh.plane(0).mean(), jg = enh.plane(1).mean(), jb = enh.plane(2).mean();
  const S n = S(enh.pixels());
  const S dr = S(2) * ((jr - jg) + (jr - jb)) / n;
  const S dg = S(2) * ((jg - jr) + (jg - jb)) / n;
  const S db = S(2) * ((jb - jr) + (jb - jg)) / n;
  d_enh.plane(0).array() += scale * dr;
  d_enh.plane(1).array() += scale * dg;
  d_enh.plane(2).array() += scale * db;
}

namespace detail {

// Forward differences with the last difference replicated, so a uniform ramp
// has a uniform gradient map.
template <typename S>
void forward_diffs(const Eigen::Map<const Mat<S>>& m, Mat<S>& gx, Mat<S>& gy) {
  const Index h = m.rows(), w = m.cols();
  gx.resize(h, w);
  gy.resize(h, w);
  gx.leftCols(w - 1) = m.rightCols(w - 1) - m.leftCols(w - 1);
  gx.col(w - 1) = gx.col(w - 2);
  gy.topRows(h - 1) = m.bottomRows(h - 1) - m.topRows(h - 1);
  gy.row(h - 1) = gy.row(h - 2);
}

}  // namespace detail

/// Mean over iterations of the summed per-channel spatial mean of
/// (|grad_x m| + |grad_y m|)^2.
template <typename S>
S smoothness_loss(const std::vector<Planes<S>>& maps) {
  if (maps.empty()) throw ContractError("smoothness_loss: need at least one map");
  S total = 0;
  Mat<S> gx, gy;
  for (const auto& map : maps) {
    if (map.height() < 2 || map.width() < 2)
      throw ContractError("smoothness_loss: maps must be at least 2x2");
    for (Index c = 0; c < map.channels(); ++c) {
      detail::forward_diffs<S>(map.plane(c), gx, gy);
      total += (gx.array().abs() + gy.array().abs()).square().mean();
    }
  }
  return total / S(maps.size());
}

/// Accumulates scale * dL/d(map) for one map of an N-map stack; the caller
/// folds the 1/N factor into `scale` (scale = weight / N).
template <typename S>
void smoothness_loss_backward_one(const Planes<S>& map, S scale,
                                  Planes<S>& d_map) {
  const Index h = map.height(), w = map.width();
  Mat<S> gx, gy;
  for (Index c = 0; c < map.channels(); ++c) {
    detail::forward_diffs<S>(map.plane(c), gx, gy);
    const Mat<S> s = gx.array().abs() + gy.array().abs();
    Mat<S> dgx =
        (S(2) / S(h * w)) * scale * s.array() * gx.array().sign();
    Mat<S> dgy =
        (S(2) / S(h * w)) * scale * s.array() * gy.array().sign();
    // fold the replicated last difference back onto its source
    dgx.col(w - 2) += dgx.col(w - 1);
    dgy.row(h - 2) += dgy.row(h - 1);
    auto d = d_map.plane(c);
    d.rightCols(w - 1) += dgx.leftCols(w - 1);
    d.leftCols(w - 1) -= dgx.leftCols(w - 1);
    d.bottomRows(h - 1) += dgy.topRows(h - 1);
    d.topRows(h - 1) -= dgy.topRows(h - 1);
  }
}

template <typename S>
S total_loss(S l_exp, S l_col, S l_tv, S l_p, const LossWeights& w) {
  if (!std::isfinite(l_exp) || !std::isfinite(l_col) || !std::isfinite(l_tv) ||
      !std::isfinite(l_p))
    throw NumericError("total_loss: non-finite component");
  return S(w.w_exp) * l_exp + S(w.w_col) * l_col + S(w.w_tv) * l_tv + S(w.w_p) * l_p;
}

}  // namespace relight

#endif  // RELIGHT_LOSSES_HPP
