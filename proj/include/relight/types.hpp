#ifndef RELIGHT_TYPES_HPP
#define RELIGHT_TYPES_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace relight {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using Index = Eigen::Index;

/// Bad user input: unreadable files, empty datasets, malformed arguments.
struct InputError : std::runtime_error {
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

/// Violated API contract: wrong training-stage order, shape mismatch, bad range.
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite values where finite ones are required.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Planes: a stack of 2D channel planes sharing one dense matrix.
//
// Storage is (height*width) x channels, one column per channel. Within a
// column, pixel (y, x) sits at row x*height + y, so each column maps onto a
// column-major height x width matrix without copying. Images are 3-channel
// stacks in [0,1]; feature maps are the same container with more channels.
// ---------------------------------------------------------------------------
template <typename Scalar>
class Planes {
 public:
  using PlaneMap = Eigen::Map<Mat<Scalar>>;
  using ConstPlaneMap = Eigen::Map<const Mat<Scalar>>;

  Planes() = default;
  Planes(Index height, Index width, Index channels)
      : h_(height), w_(width), mat_(height * width, channels) {
    if (height < 1 || width < 1 || channels < 1)
      throw ContractError("Planes: dimensions must be positive");
  }

  static Planes zero(Index h, Index w, Index c) {
    Planes p(h, w, c);
    p.mat_.setZero();
    return p;
  }
  static Planes constant(Index h, Index w, Index c, Scalar v) {
    Planes p(h, w, c);
    p.mat_.setConstant(v);
    return p;
  }

  Index height() const { return h_; }
  Index width() const { return w_; }
  Index channels() const { return mat_.cols(); }
  Index pixels() const { return h_ * w_; }

  Mat<Scalar>& mat() { return mat_; }
  const Mat<Scalar>& mat() const { return mat_; }

  Scalar& at(Index y, Index x, Index c) { return mat_(x * h_ + y, c); }
  Scalar at(Index y, Index x, Index c) const { return mat_(x * h_ + y, c); }

  PlaneMap plane(Index c) { return PlaneMap(mat_.col(c).data(), h_, w_); }
  ConstPlaneMap plane(Index c) const {
    return ConstPlaneMap(mat_.col(c).data(), h_, w_);
  }

  bool same_shape(const Planes& o) const {
    return h_ == o.h_ && w_ == o.w_ && channels() == o.channels();
  }

  bool all_finite() const { return mat_.allFinite(); }

 private:
  Index h_ = 0, w_ = 0;
  Mat<Scalar> mat_;
};

template <typename S>
Planes<S> clamp01(Planes<S> p) {
  p.mat() = p.mat().cwiseMax(S(0)).cwiseMin(S(1));
  return p;
}

// Edge-replicating pad on the bottom/right only; keeps pixel (0,0) anchored
// so crop_topleft() is the exact inverse.
template <typename S>
Planes<S> pad_bottom_right(const Planes<S>& in, Index pad_h, Index pad_w) {
  if (pad_h == 0 && pad_w == 0) return in;
  Planes<S> out(in.height() + pad_h, in.width() + pad_w, in.channels());
  for (Index c = 0; c < in.channels(); ++c) {
    auto src = in.plane(c);
    auto dst = out.plane(c);
    dst.topLeftCorner(in.height(), in.width()) = src;
    for (Index k = 0; k < pad_h; ++k)
      dst.row(in.height() + k).head(in.width()) = src.row(in.height() - 1);
    for (Index k = 0; k < pad_w; ++k)
      dst.col(in.width() + k) = dst.col(in.width() - 1);
  }
  return out;
}

template <typename S>
Planes<S> crop_topleft(const Planes<S>& in, Index h, Index w) {
  if (h == in.height() && w == in.width()) return in;
  if (h > in.height() || w > in.width())
    throw ContractError("crop_topleft: target larger than source");
  Planes<S> out(h, w, in.channels());
  for (Index c = 0; c < in.channels(); ++c)
    out.plane(c) = in.plane(c).topLeftCorner(h, w);
  return out;
}

inline Index round_up(Index n, Index multiple) {
  return (n + multiple - 1) / multiple * multiple;
}

template <typename S>
Planes<S> pad_to_multiple(const Planes<S>& in, Index multiple) {
  return pad_bottom_right(in, round_up(in.height(), multiple) - in.height(),
                          round_up(in.width(), multiple) - in.width());
}

// ---------------------------------------------------------------------------
// Bilinear resize (half-pixel-center convention, edges clamped). The backward
// pass is the exact transpose of the forward interpolation.
// ---------------------------------------------------------------------------

namespace detail {
struct LinearTap {
  Index lo, hi;
  double w_hi;  // weight of `hi`; `lo` gets 1 - w_hi
};

inline LinearTap linear_tap(Index dst, Index n_dst, Index n_src) {
  double pos = (static_cast<double>(dst) + 0.5) * n_src / n_dst - 0.5;
  if (pos < 0) pos = 0;
  if (pos > n_src - 1) pos = static_cast<double>(n_src - 1);
  Index lo = static_cast<Index>(std::floor(pos));
  Index hi = std::min(lo + 1, n_src - 1);
  return {lo, hi, pos - static_cast<double>(lo)};
}
}  // namespace detail

template <typename S>
Planes<S> bilinear_resize(const Planes<S>& in, Index out_h, Index out_w) {
  if (out_h < 1 || out_w < 1) throw ContractError("bilinear_resize: bad size");
  if (out_h == in.height() && out_w == in.width()) return in;
  Planes<S> out(out_h, out_w, in.channels());
  Mat<S> rows(out_h, in.width());  // per channel: resize rows, then columns
  for (Index c = 0; c < in.channels(); ++c) {
    auto src = in.plane(c);
    for (Index y = 0; y < out_h; ++y) {
      auto t = detail::linear_tap(y, out_h, in.height());
      rows.row(y) = src.row(t.lo) * S(1.0 - t.w_hi) + src.row(t.hi) * S(t.w_hi);
    }
    auto dst = out.plane(c);
    for (Index x = 0; x < out_w; ++x) {
      auto t = detail::linear_tap(x, out_w, in.width());
      dst.col(x) = rows.col(t.lo) * S(1.0 - t.w_hi) + rows.col(t.hi) * S(t.w_hi);
    }
  }
  return out;
}

template <typename S>
Planes<S> bilinear_resize_backward(const Planes<S>& d_out, Index in_h, Index in_w) {
  if (d_out.height() == in_h && d_out.width() == in_w) return d_out;
  Planes<S> d_in = Planes<S>::zero(in_h, in_w, d_out.channels());
  Mat<S> d_rows(d_out.height(), in_w);
  for (Index c = 0; c < d_out.channels(); ++c) {
    auto dst = d_out.plane(c);
    d_rows.setZero();
    for (Index x = 0; x < d_out.width(); ++x) {
      auto t = detail::linear_tap(x, d_out.width(), in_w);
      d_rows.col(t.lo) += dst.col(x) * S(1.0 - t.w_hi);
      d_rows.col(t.hi) += dst.col(x) * S(t.w_hi);
    }
    auto src = d_in.plane(c);
    for (Index y = 0; y < d_out.height(); ++y) {
      auto t = detail::linear_tap(y, d_out.height(), in_h);
      src.row(t.lo) += d_rows.row(y) * S(1.0 - t.w_hi);
      src.row(t.hi) += d_rows.row(y) * S(t.w_hi);
    }
  }
  return d_in;
}

template <typename S>
Planes<S> upsample2x(const Planes<S>& in) {
  return bilinear_resize(in, in.height() * 2, in.width() * 2);
}

// ---------------------------------------------------------------------------
// Rng: seeded mt19937_64 with hand-rolled distributions so that sampled
// sequences are identical across standard libraries.
// ---------------------------------------------------------------------------
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return state_(); }

  double uniform() {  // [0, 1)
    return static_cast<double>(state_() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive range
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(state_() % span);
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0, u2 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 1e-300);
    u2 = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    spare_ = mag * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return mag * std::cos(2.0 * M_PI * u2);
  }

 private:
  std::mt19937_64 state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// FNV-1a, used for the seeded train/test split so it is stable across runs
// and platforms.
inline std::uint64_t fnv1a64(const std::string& s, std::uint64_t seed) {
  std::uint64_t h = 1469598103934665603ull ^ (seed * 1099511628211ull);
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace relight

#endif  // RELIGHT_TYPES_HPP
