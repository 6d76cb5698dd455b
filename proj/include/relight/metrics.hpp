#ifndef RELIGHT_METRICS_HPP
#define RELIGHT_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "relight/imgstats.hpp"
#include "relight/types.hpp"

namespace relight {

/// Peak signal-to-noise ratio on [0,1] images, in dB. Identical images
/// report +infinity as the documented sentinel.
template <typename S>
double psnr(const Planes<S>& a, const Planes<S>& b) {
  if (!a.same_shape(b)) throw ContractError("psnr: shape mismatch");
  const double mse =
      (a.mat() - b.mat()).template cast<double>().array().square().mean();
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

namespace detail {

inline Vec<double> gaussian_window(int size, double sigma) {
  Vec<double> g(size);
  const double c = (size - 1) / 2.0;
  for (int i = 0; i < size; ++i)
    g[i] = std::exp(-(i - c) * (i - c) / (2 * sigma * sigma));
  g /= g.sum();
  return g;
}

// Separable valid-mode filtering with a symmetric 1D window.
inline Mat<double> filter_valid(const Mat<double>& m, const Vec<double>& g) {
  const Index k = g.size();
  Mat<double> rows = Mat<double>::Zero(m.rows() - k + 1, m.cols());
  for (Index t = 0; t < k; ++t)
    rows += g[t] * m.middleRows(t, rows.rows());
  Mat<double> out = Mat<double>::Zero(rows.rows(), m.cols() - k + 1);
  for (Index t = 0; t < k; ++t)
    out += g[t] * rows.middleCols(t, out.cols());
  return out;
}

template <typename S>
Mat<double> luma(const Planes<S>& img) {
  Mat<double> l = img.plane(0).template cast<double>();
  for (Index c = 1; c < img.channels(); ++c)
    l += img.plane(c).template cast<double>();
  return l / static_cast<double>(img.channels());
}

}  // namespace detail

/// Mean structural similarity on the luma (RGB mean) channel: 11x11 Gaussian
/// window (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2 on the [0,1] range.
template <typename S>
double ssim(const Planes<S>& a, const Planes<S>& b) {
  if (!a.same_shape(b)) throw ContractError("ssim: shape mismatch");
  if (a.height() < 11 || a.width() < 11)
    throw ContractError("ssim: image smaller than the 11x11 window");
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const Vec<double> g = detail::gaussian_window(11, 1.5);
  const Mat<double> la = detail::luma(a), lb = detail::luma(b);
  const Mat<double> mu_a = detail::filter_valid(la, g);
  const Mat<double> mu_b = detail::filter_valid(lb, g);
  const Mat<double> var_a =
      detail::filter_valid(la.cwiseProduct(la), g) - mu_a.cwiseProduct(mu_a);
  const Mat<double> var_b =
      detail::filter_valid(lb.cwiseProduct(lb), g) - mu_b.cwiseProduct(mu_b);
  const Mat<double> cov =
      detail::filter_valid(la.cwiseProduct(lb), g) - mu_a.cwiseProduct(mu_b);
  const auto num = (2 * mu_a.array() * mu_b.array() + c1) * (2 * cov.array() + c2);
  const auto den = (mu_a.array().square() + mu_b.array().square() + c1) *
                   (var_a.array() + var_b.array() + c2);
  return (num / den).mean();
}

/// Block contrast: mean over non-overlapping 16x16 V-channel blocks of
/// 20*log10((max + eps) / (min + eps)), eps = 1e-4.
template <typename S>
double eme(const Planes<S>& img, int block = 16, double eps = 1e-4) {
  const Mat<S> v = rgb_to_v(img);
  double sum = 0;
  int n = 0;
  for (Index ty = 0; ty < v.rows(); ty += block) {
    const Index th = std::min<Index>(block, v.rows() - ty);
    for (Index tx = 0; tx < v.cols(); tx += block) {
      const Index tw = std::min<Index>(block, v.cols() - tx);
      const double mx = v.block(ty, tx, th, tw).maxCoeff();
      const double mn = v.block(ty, tx, th, tw).minCoeff();
      sum += 20.0 * std::log10((mx + eps) / (mn + eps));
      ++n;
    }
  }
  return sum / n;
}

/// Lightness order error: relative-order disagreements of the channel-max
/// lightness between original and enhanced, on a grid subsampled to at most
/// 100x100 (plain strided picking, so monotone maps keep LOE at zero).
template <typename S>
double loe(const Planes<S>& orig, const Planes<S>& enh) {
  if (!orig.same_shape(enh)) throw ContractError("loe: shape mismatch");
  const Mat<S> lo_full = rgb_to_v(orig), le_full = rgb_to_v(enh);
  const Index h = lo_full.rows(), w = lo_full.cols();
  const Index stride = std::max<Index>(1, std::max((h + 99) / 100, (w + 99) / 100));
  std::vector<double> lo, le;
  for (Index x = 0; x < w; x += stride)
    for (Index y = 0; y < h; y += stride) {
      lo.push_back(lo_full(y, x));
      le.push_back(le_full(y, x));
    }
  const std::size_t n = lo.size();
  double total = 0;
  for (std::size_t p = 0; p < n; ++p) {
    long rd = 0;
    for (std::size_t q = 0; q < n; ++q)
      rd += static_cast<long>((lo[p] >= lo[q]) != (le[p] >= le[q]));
    total += static_cast<double>(rd);
  }
  return total / static_cast<double>(n);
}

// ---------------------------------------------------------------------------

inline const std::vector<std::string>& supported_metrics() {
  static const std::vector<std::string> names = {"psnr", "ssim", "eme", "loe"};
  return names;
}

/// NIQE and LPIPS need external pretrained models and are deliberately not
/// computed; reports keep their columns reserved as unavailable.
inline const std::vector<std::string>& unavailable_metrics() {
  static const std::vector<std::string> names = {"niqe", "lpips"};
  return names;
}

struct MetricReport {
  std::vector<std::string> metrics;
  std::vector<std::vector<double>> per_image;  // [image][metric]
  std::vector<double> aggregate;               // arithmetic mean per metric
  int image_count = 0;

  void write_table(std::ostream& os) const {
    os << "index";
    for (const auto& m : metrics) os << '\t' << m;
    os << '\n';
    os.precision(9);
    for (int i = 0; i < image_count; ++i) {
      os << i;
      for (double v : per_image[i]) os << '\t' << v;
      os << '\n';
    }
    os << "mean";
    for (double v : aggregate) os << '\t' << v;
    os << '\n';
  }
};

inline void validate_metric_names(const std::vector<std::string>& names) {
  if (names.empty()) throw InputError("no metrics requested");
  for (const auto& name : names) {
    const auto& ok = supported_metrics();
    if (std::find(ok.begin(), ok.end(), name) != ok.end()) continue;
    const auto& off = unavailable_metrics();
    if (std::find(off.begin(), off.end(), name) != off.end())
      throw InputError("metric '" + name +
                       "' requires an external pretrained model and is not "
                       "computed by this tool (supported: psnr, ssim, eme, loe)");
    throw InputError("unknown metric '" + name + "'");
  }
}

/// Applies the enabled metrics to (first, second) pairs. The first image is
/// the reference for psnr/ssim and the original input for loe; eme is
/// no-reference and scores the second image.
template <typename S>
MetricReport evaluate_pairset(
    const std::vector<std::pair<Planes<S>, Planes<S>>>& pairs,
    const std::vector<std::string>& metric_names) {
  validate_metric_names(metric_names);
  if (pairs.empty()) throw InputError("evaluate_pairset: empty pair list");
  MetricReport report;
  report.metrics = metric_names;
  report.image_count = static_cast<int>(pairs.size());
  report.aggregate.assign(metric_names.size(), 0.0);
  for (const auto& [first, second] : pairs) {
    std::vector<double> row;
    row.reserve(metric_names.size());
    for (const auto& name : metric_names) {
      double v = 0;
      if (name == "psnr") v = psnr(first, second);
      else if (name == "ssim") v = ssim(first, second);
      else if (name == "eme") v = eme(second);
      else v = loe(first, second);
      row.push_back(v);
    }
    for (std::size_t i = 0; i < row.size(); ++i) report.aggregate[i] += row[i];
    report.per_image.push_back(std::move(row));
  }
  for (auto& v : report.aggregate) v /= report.image_count;
  return report;
}

}  // namespace relight

#endif  // RELIGHT_METRICS_HPP
