#ifndef RELIGHT_IMGSTATS_HPP
#define RELIGHT_IMGSTATS_HPP

#include <vector>

#include "relight/types.hpp"

namespace relight {

inline constexpr int kHistogramBins = 256;

/// HSV value channel: per-pixel maximum over the input channels.
/// Hue and saturation are never needed, so they are never computed.
template <typename S>
Mat<S> rgb_to_v(const Planes<S>& img) {
  Mat<S> v = img.plane(0);
  for (Index c = 1; c < img.channels(); ++c) v = v.cwiseMax(img.plane(c));
  return v;
}

/// Global mean of the V channel; the quantity bucketing, the pseudo-label
/// loop and the recursion trace all agree on.
template <typename S>
S mean_brightness(const Planes<S>& img) {
  return rgb_to_v(img).mean();
}

/// 256-bin probability histogram of a V channel. Bin = min(floor(v*256), 255),
/// mass normalized by the pixel count.
template <typename S>
Vec<S> brightness_histogram(const Mat<S>& v) {
  Vec<S> mass = Vec<S>::Zero(kHistogramBins);
  const S* p = v.data();
  const Index n = v.size();
  for (Index i = 0; i < n; ++i) {
    int bin = static_cast<int>(std::floor(p[i] * S(kHistogramBins)));
    if (bin < 0) bin = 0;
    if (bin > kHistogramBins - 1) bin = kHistogramBins - 1;
    mass[bin] += S(1);
  }
  mass /= S(n);
  return mass;
}

// ---------------------------------------------------------------------------
// Single-level Haar split in the averaging convention: each band is a plain
// average of +/- 2x2 block entries, so the LL band of a [0,1] image stays in
// [0,1] and shares the V-channel histogram domain. `high` concatenates the
// LH, HL and HH bands (band-major: all LH channels, then HL, then HH).
// ---------------------------------------------------------------------------
template <typename S>
struct WaveletBands {
  Planes<S> low;   // (H/2) x (W/2) x C
  Planes<S> high;  // (H/2) x (W/2) x 3C
  Index orig_h = 0, orig_w = 0;  // pre-padding size, restored on reconstruction
};

template <typename S>
WaveletBands<S> haar_decompose(const Planes<S>& img) {
  if (img.height() < 2 || img.width() < 2)
    throw ContractError("haar_decompose: image must be at least 2x2");
  const Index oh = img.height(), ow = img.width();
  const Planes<S>& in = (oh % 2 || ow % 2) ? pad_to_multiple(img, 2) : img;
  const Index hh = in.height() / 2, hw = in.width() / 2;
  const Index nc = in.channels();

  WaveletBands<S> bands;
  bands.low = Planes<S>(hh, hw, nc);
  bands.high = Planes<S>(hh, hw, 3 * nc);
  bands.orig_h = oh;
  bands.orig_w = ow;

  using Eigen::seq;
  for (Index c = 0; c < nc; ++c) {
    auto src = in.plane(c);
    auto a = src(seq(0, 2 * hh - 2, 2), seq(0, 2 * hw - 2, 2));
    auto b = src(seq(0, 2 * hh - 2, 2), seq(1, 2 * hw - 1, 2));
    auto cc = src(seq(1, 2 * hh - 1, 2), seq(0, 2 * hw - 2, 2));
    auto d = src(seq(1, 2 * hh - 1, 2), seq(1, 2 * hw - 1, 2));
    bands.low.plane(c) = (a + b + cc + d) / S(4);            // LL
    bands.high.plane(c) = (a - b + cc - d) / S(4);           // LH
    bands.high.plane(nc + c) = (a + b - cc - d) / S(4);      // HL
    bands.high.plane(2 * nc + c) = (a - b - cc + d) / S(4);  // HH
  }
  return bands;
}

template <typename S>
Planes<S> haar_reconstruct(const WaveletBands<S>& bands) {
  const Index hh = bands.low.height(), hw = bands.low.width();
  const Index nc = bands.low.channels();
  if (bands.high.channels() != 3 * nc)
    throw ContractError("haar_reconstruct: band channel mismatch");
  Planes<S> out(2 * hh, 2 * hw, nc);
  using Eigen::seq;
  for (Index c = 0; c < nc; ++c) {
    auto ll = bands.low.plane(c);
    auto lh = bands.high.plane(c);
    auto hl = bands.high.plane(nc + c);
    auto hhb = bands.high.plane(2 * nc + c);
    auto dst = out.plane(c);
    dst(seq(0, 2 * hh - 2, 2), seq(0, 2 * hw - 2, 2)) = ll + lh + hl + hhb;
    dst(seq(0, 2 * hh - 2, 2), seq(1, 2 * hw - 1, 2)) = ll - lh + hl - hhb;
    dst(seq(1, 2 * hh - 1, 2), seq(0, 2 * hw - 2, 2)) = ll + lh - hl - hhb;
    dst(seq(1, 2 * hh - 1, 2), seq(1, 2 * hw - 1, 2)) = ll - lh - hl + hhb;
  }
  if (bands.orig_h && (bands.orig_h != out.height() || bands.orig_w != out.width()))
    return crop_topleft(out, bands.orig_h, bands.orig_w);
  return out;
}

/// Gradient of haar_decompose through the high bands only (the LL path feeds
/// a histogram, which is piecewise constant and carries no gradient).
/// Only valid for even input sizes, which is all the network ever sees.
template <typename S>
Planes<S> haar_high_backward(const Planes<S>& d_high) {
  const Index hh = d_high.height(), hw = d_high.width();
  const Index nc = d_high.channels() / 3;
  Planes<S> d_in(2 * hh, 2 * hw, nc);
  using Eigen::seq;
  for (Index c = 0; c < nc; ++c) {
    auto lh = d_high.plane(c);
    auto hl = d_high.plane(nc + c);
    auto hhb = d_high.plane(2 * nc + c);
    auto dst = d_in.plane(c);
    dst(seq(0, 2 * hh - 2, 2), seq(0, 2 * hw - 2, 2)) = (lh + hl + hhb) / S(4);
    dst(seq(0, 2 * hh - 2, 2), seq(1, 2 * hw - 1, 2)) = (-lh + hl - hhb) / S(4);
    dst(seq(1, 2 * hh - 1, 2), seq(0, 2 * hw - 2, 2)) = (lh - hl - hhb) / S(4);
    dst(seq(1, 2 * hh - 1, 2), seq(1, 2 * hw - 1, 2)) = (-lh - hl + hhb) / S(4);
  }
  return d_in;
}

/// Means of non-overlapping patch x patch tiles (over all pixels and
/// channels), row-major tile order. Edge tiles average their actual pixels.
template <typename S>
std::vector<S> patch_means(const Planes<S>& img, int patch) {
  if (patch < 1) throw ContractError("patch_means: patch must be >= 1");
  const Index ph = patch;
  std::vector<S> means;
  means.reserve(((img.height() + ph - 1) / ph) * ((img.width() + ph - 1) / ph));
  for (Index ty = 0; ty < img.height(); ty += ph) {
    const Index th = std::min(ph, img.height() - ty);
    for (Index tx = 0; tx < img.width(); tx += ph) {
      const Index tw = std::min(ph, img.width() - tx);
      S sum = 0;
      for (Index c = 0; c < img.channels(); ++c)
        sum += img.plane(c).block(ty, tx, th, tw).sum();
      means.push_back(sum / S(th * tw * img.channels()));
    }
  }
  return means;
}

}  // namespace relight

#endif  // RELIGHT_IMGSTATS_HPP
