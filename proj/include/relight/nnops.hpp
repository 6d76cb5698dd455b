#ifndef RELIGHT_NNOPS_HPP
#define RELIGHT_NNOPS_HPP

#include <string>
#include <vector>

#include "relight/types.hpp"

namespace relight {

// ---------------------------------------------------------------------------
// Convolutions are GEMMs over patch matrices. A feature stack (HW x C) turns
// into K (HoWo x C*k*k) with zero padding k/2, and the layer weight is kept
// pre-flattened as (C*k*k x Cout) so that forward is `K * weight`.
//
// Tap order within a patch column block mirrors the pixel order: index
// t = (dx+r)*k + (dy+r), r = k/2, so y varies fastest.
// ---------------------------------------------------------------------------

template <typename S>
struct Conv2d {
  Mat<S> weight;  // (in_ch * ksize^2) x out_ch
  Vec<S> bias;    // out_ch, or empty for bias-free layers
  int in_ch = 0, out_ch = 0, ksize = 3, stride = 1;

  bool has_bias() const { return bias.size() > 0; }

  // rng == nullptr zero-initializes; otherwise He-uniform over fan-in.
  static Conv2d make(int in_ch, int out_ch, int ksize, int stride, bool bias,
                     Rng* rng) {
    Conv2d c;
    c.in_ch = in_ch;
    c.out_ch = out_ch;
    c.ksize = ksize;
    c.stride = stride;
    c.weight = Mat<S>::Zero(in_ch * ksize * ksize, out_ch);
    if (bias) c.bias = Vec<S>::Zero(out_ch);
    if (rng) {
      const double limit = std::sqrt(6.0 / (in_ch * ksize * ksize));
      S* w = c.weight.data();
      for (Index i = 0; i < c.weight.size(); ++i)
        w[i] = static_cast<S>(rng->uniform(-limit, limit));
    }
    return c;
  }
};

template <typename S>
struct Dense {
  Mat<S> weight;  // in x out
  Vec<S> bias;    // out

  static Dense make(int in, int out, Rng* rng) {
    Dense d;
    d.weight = Mat<S>::Zero(in, out);
    d.bias = Vec<S>::Zero(out);
    if (rng) {
      const double limit = std::sqrt(6.0 / in);
      S* w = d.weight.data();
      for (Index i = 0; i < d.weight.size(); ++i)
        w[i] = static_cast<S>(rng->uniform(-limit, limit));
    }
    return d;
  }
};

namespace detail {

inline Index ceil_div(Index a, Index b) {  // b > 0
  return a >= 0 ? (a + b - 1) / b : -((-a) / b);
}

struct TapRange {
  Index out_lo, out_cnt;  // valid output rows/cols for this tap offset
};

// Output positions o for which o*stride + d lands inside [0, n_in).
inline TapRange tap_range(Index d, Index stride, Index n_in, Index n_out) {
  Index lo = std::max<Index>(0, ceil_div(-d, stride));
  Index hi = std::min<Index>(n_out - 1, (n_in - 1 - d) / stride);
  if (n_in - 1 - d < 0) hi = -1;
  return {lo, std::max<Index>(0, hi - lo + 1)};
}

}  // namespace detail

inline Index conv_out_size(Index n, int ksize, int stride) {
  const Index pad = ksize / 2;
  return (n + 2 * pad - ksize) / stride + 1;
}

template <typename S>
Mat<S> im2col(const Planes<S>& x, int ksize, int stride) {
  const Index h = x.height(), w = x.width(), c = x.channels();
  const Index ho = conv_out_size(h, ksize, stride);
  const Index wo = conv_out_size(w, ksize, stride);
  const Index r = ksize / 2;
  Mat<S> k(ho * wo, c * ksize * ksize);
  using Eigen::seq;
  for (int dx = -static_cast<int>(r); dx <= static_cast<int>(r); ++dx) {
    for (int dy = -static_cast<int>(r); dy <= static_cast<int>(r); ++dy) {
      const Index t = (dx + r) * ksize + (dy + r);
      const auto ry = detail::tap_range(dy, stride, h, ho);
      const auto rx = detail::tap_range(dx, stride, w, wo);
      const bool full = ry.out_cnt == ho && rx.out_cnt == wo;
      for (Index ch = 0; ch < c; ++ch) {
        auto col = Eigen::Map<Mat<S>>(k.col(ch * ksize * ksize + t).data(), ho, wo);
        if (!full) col.setZero();
        if (ry.out_cnt == 0 || rx.out_cnt == 0) continue;
        const Index sy = ry.out_lo * stride + dy, sx = rx.out_lo * stride + dx;
        col.block(ry.out_lo, rx.out_lo, ry.out_cnt, rx.out_cnt) =
            x.plane(ch)(seq(sy, sy + (ry.out_cnt - 1) * stride, stride),
                        seq(sx, sx + (rx.out_cnt - 1) * stride, stride));
      }
    }
  }
  return k;
}

/// Transpose of im2col: scatter-add patch-matrix gradients back to the input.
template <typename S>
void col2im_add(const Mat<S>& d_k, int ksize, int stride, Planes<S>& d_x) {
  const Index h = d_x.height(), w = d_x.width(), c = d_x.channels();
  const Index ho = conv_out_size(h, ksize, stride);
  const Index wo = conv_out_size(w, ksize, stride);
  const Index r = ksize / 2;
  using Eigen::seq;
  for (int dx = -static_cast<int>(r); dx <= static_cast<int>(r); ++dx) {
    for (int dy = -static_cast<int>(r); dy <= static_cast<int>(r); ++dy) {
      const Index t = (dx + r) * ksize + (dy + r);
      const auto ry = detail::tap_range(dy, stride, h, ho);
      const auto rx = detail::tap_range(dx, stride, w, wo);
      if (ry.out_cnt == 0 || rx.out_cnt == 0) continue;
      const Index sy = ry.out_lo * stride + dy, sx = rx.out_lo * stride + dx;
      for (Index ch = 0; ch < c; ++ch) {
        auto col = Eigen::Map<const Mat<S>>(
            d_k.col(ch * ksize * ksize + t).data(), ho, wo);
        d_x.plane(ch)(seq(sy, sy + (ry.out_cnt - 1) * stride, stride),
                      seq(sx, sx + (rx.out_cnt - 1) * stride, stride)) +=
            col.block(ry.out_lo, rx.out_lo, ry.out_cnt, rx.out_cnt);
      }
    }
  }
}

template <typename S>
Planes<S> conv_forward(const Planes<S>& x, const Conv2d<S>& p) {
  if (x.channels() != p.in_ch) throw ContractError("conv_forward: channel mismatch");
  const Index ho = conv_out_size(x.height(), p.ksize, p.stride);
  const Index wo = conv_out_size(x.width(), p.ksize, p.stride);
  Planes<S> y(ho, wo, p.out_ch);
  if (p.ksize == 1 && p.stride == 1) {
    y.mat().noalias() = x.mat() * p.weight;
  } else {
    y.mat().noalias() = im2col(x, p.ksize, p.stride) * p.weight;
  }
  if (p.has_bias()) y.mat().rowwise() += p.bias.transpose();
  return y;
}

/// Accumulates parameter gradients into `grad` and, when d_x != nullptr,
/// input gradients into *d_x (which must be pre-sized and may hold a partial
/// sum already).
template <typename S>
void conv_backward(const Planes<S>& x, const Conv2d<S>& p, const Planes<S>& d_y,
                   Conv2d<S>& grad, Planes<S>* d_x) {
  if (p.ksize == 1 && p.stride == 1) {
    grad.weight.noalias() += x.mat().transpose() * d_y.mat();
    if (p.has_bias()) grad.bias += d_y.mat().colwise().sum().transpose();
    if (d_x) d_x->mat().noalias() += d_y.mat() * p.weight.transpose();
    return;
  }
  const Mat<S> k = im2col(x, p.ksize, p.stride);
  grad.weight.noalias() += k.transpose() * d_y.mat();
  if (p.has_bias()) grad.bias += d_y.mat().colwise().sum().transpose();
  if (d_x) {
    const Mat<S> d_k = d_y.mat() * p.weight.transpose();
    col2im_add(d_k, p.ksize, p.stride, *d_x);
  }
}

// ---------------------------------------------------------------------------
// Central difference convolution: out(p0) = sum_t w(t) * (f(p0+t) - f(p0)),
// summed over taps that land inside the image. Constant inputs map to zero
// everywhere, borders included, and adding a constant never changes the
// output. 3x3, stride 1, bias-free.
// ---------------------------------------------------------------------------

template <typename S>
Mat<S> cdc_patch_matrix(const Planes<S>& x, int ksize) {
  Mat<S> k = im2col(x, ksize, 1);
  const Index h = x.height(), w = x.width();
  const Index r = ksize / 2;
  for (int dx = -static_cast<int>(r); dx <= static_cast<int>(r); ++dx) {
    for (int dy = -static_cast<int>(r); dy <= static_cast<int>(r); ++dy) {
      const Index t = (dx + r) * ksize + (dy + r);
      const auto ry = detail::tap_range(dy, 1, h, h);
      const auto rx = detail::tap_range(dx, 1, w, w);
      for (Index ch = 0; ch < x.channels(); ++ch) {
        auto col = Eigen::Map<Mat<S>>(k.col(ch * ksize * ksize + t).data(), h, w);
        col.block(ry.out_lo, rx.out_lo, ry.out_cnt, rx.out_cnt) -=
            x.plane(ch).block(ry.out_lo, rx.out_lo, ry.out_cnt, rx.out_cnt);
      }
    }
  }
  return k;
}

template <typename S>
Planes<S> cdc_forward(const Planes<S>& x, const Conv2d<S>& p) {
  if (x.channels() != p.in_ch) throw ContractError("cdc_forward: channel mismatch");
  if (p.stride != 1) throw ContractError("cdc_forward: stride must be 1");
  Planes<S> y(x.height(), x.width(), p.out_ch);
  y.mat().noalias() = cdc_patch_matrix(x, p.ksize) * p.weight;
  return y;
}

template <typename S>
void cdc_backward(const Planes<S>& x, const Conv2d<S>& p, const Planes<S>& d_y,
                  Conv2d<S>& grad, Planes<S>* d_x) {
  const int ksize = p.ksize;
  grad.weight.noalias() += cdc_patch_matrix(x, ksize).transpose() * d_y.mat();
  if (!d_x) return;
  const Mat<S> d_k = d_y.mat() * p.weight.transpose();
  col2im_add(d_k, ksize, 1, *d_x);
  const Index h = x.height(), w = x.width();
  const Index r = ksize / 2;
  for (int dx = -static_cast<int>(r); dx <= static_cast<int>(r); ++dx) {
    for (int dy = -static_cast<int>(r); dy <= static_cast<int>(r); ++dy) {
      const Index t = (dx + r) * ksize + (dy + r);
      const auto ry = detail::tap_range(dy, 1, h, h);
      const auto rx = detail::tap_range(dx, 1, w, w);
      for (Index ch = 0; ch < x.channels(); ++ch) {
        auto col = Eigen::Map<const Mat<S>>(
            d_k.col(ch * ksize * ksize + t).data(), h, w);
        d_x->plane(ch).block(ry.out_lo, rx.out_lo, ry.out_cnt, rx.out_cnt) -=
            col.block(ry.out_lo, rx.out_lo, ry.out_cnt, rx.out_cnt);
      }
    }
  }
}

// ---------------------------------------------------------------------------

template <typename S>
Vec<S> dense_forward(const Vec<S>& x, const Dense<S>& p) {
  return p.weight.transpose() * x + p.bias;
}

template <typename S>
void dense_backward(const Vec<S>& x, const Dense<S>& p, const Vec<S>& d_y,
                    Dense<S>& grad, Vec<S>* d_x) {
  grad.weight.noalias() += x * d_y.transpose();
  grad.bias += d_y;
  if (d_x) d_x->noalias() += p.weight * d_y;
}

template <typename S>
void relu_inplace(Mat<S>& m) {
  m = m.cwiseMax(S(0));
}

template <typename S>
void sigmoid_inplace(Mat<S>& m) {
  m.array() = S(1) / (S(1) + (-m.array()).exp());
}

// ---------------------------------------------------------------------------
// Flat named views over parameter tensors. Optimizers, serialization and
// norm computations all iterate the same stable enumeration.
// ---------------------------------------------------------------------------
template <typename S>
struct TensorView {
  std::string name;
  S* data;
  Index rows, cols;
  Index size() const { return rows * cols; }
};

template <typename S>
void collect(Conv2d<S>& c, const std::string& name, std::vector<TensorView<S>>& out) {
  out.push_back({name + ".w", c.weight.data(), c.weight.rows(), c.weight.cols()});
  if (c.has_bias()) out.push_back({name + ".b", c.bias.data(), c.bias.size(), 1});
}

template <typename S>
void collect(Dense<S>& d, const std::string& name, std::vector<TensorView<S>>& out) {
  out.push_back({name + ".w", d.weight.data(), d.weight.rows(), d.weight.cols()});
  out.push_back({name + ".b", d.bias.data(), d.bias.size(), 1});
}

}  // namespace relight

#endif  // RELIGHT_NNOPS_HPP
