#ifndef RELIGHT_ACTNET_HPP
#define RELIGHT_ACTNET_HPP

#include <vector>

#include "relight/imgstats.hpp"
#include "relight/nnops.hpp"
#include "relight/types.hpp"

namespace relight {

// ---------------------------------------------------------------------------
// ACT-Net: a small UNet whose two decoder stages are each followed by an
// adaptive adjustment module (AAM). The AAM blends a central-difference and a
// vanilla 3x3 convolution under a spatial coefficient theta from the gradient
// branch, then applies per-channel affine modulation (alpha, beta) from the
// brightness branch:
//
//   AAM(f) = ReLU(theta*CDC(f) + (1-theta)*Conv(f)) * alpha + beta
//
// The gradient branch reads the Haar high band of the current input; the
// brightness branch reads the 256-bin V histogram of the Haar LL band. The
// output head squashes to a [0,1] curve map, one value per pixel and channel.
// ---------------------------------------------------------------------------

inline constexpr int kStemChannels = 32;
inline constexpr int kMidChannels = 64;
inline constexpr int kBottomChannels = 128;
inline constexpr int kGradChannels = 16;
inline constexpr int kBrightFeat = 32;  // width feeding the alpha/beta heads

template <typename S>
struct AamParams {
  Conv2d<S> cdc;   // bias-free by construction
  Conv2d<S> conv;  // independent weights, biased
  Dense<S> alpha_head, beta_head;
};

/// Per-AAM modulation inputs: alpha/beta are per-channel vectors, theta is a
/// single-channel spatial map (one entry per pixel) broadcast over channels.
template <typename S>
struct AdjustmentParams {
  Vec<S> alpha, beta;
  Vec<S> theta;
};

template <typename S>
struct ActNetParams {
  Conv2d<S> stem1, stem2, down1, down2;  // encoder
  Conv2d<S> up1, up2, head;              // decoder convs + output head
  AamParams<S> aam1, aam2;
  Conv2d<S> grad1, grad2, grad3, grad_head;  // gradient adjustment branch
  Dense<S> fc1, fc2, fc3, fc4;               // brightness adjustment branch

  static ActNetParams init(std::uint64_t seed) {
    Rng rng(seed);
    ActNetParams p;
    p.stem1 = Conv2d<S>::make(3, kStemChannels, 1, 1, true, &rng);
    p.stem2 = Conv2d<S>::make(kStemChannels, kStemChannels, 3, 1, true, &rng);
    p.down1 = Conv2d<S>::make(kStemChannels, kMidChannels, 3, 2, true, &rng);
    p.down2 = Conv2d<S>::make(kMidChannels, kBottomChannels, 3, 2, true, &rng);
    p.up1 = Conv2d<S>::make(kBottomChannels, kMidChannels, 3, 1, true, &rng);
    p.up2 = Conv2d<S>::make(kMidChannels, kStemChannels, 3, 1, true, &rng);
    p.head = Conv2d<S>::make(kStemChannels, 3, 3, 1, true, &rng);
    p.aam1.cdc = Conv2d<S>::make(kMidChannels, kMidChannels, 3, 1, false, &rng);
    p.aam1.conv = Conv2d<S>::make(kMidChannels, kMidChannels, 3, 1, true, &rng);
    p.aam2.cdc = Conv2d<S>::make(kStemChannels, kStemChannels, 3, 1, false, &rng);
    p.aam2.conv = Conv2d<S>::make(kStemChannels, kStemChannels, 3, 1, true, &rng);
    p.grad1 = Conv2d<S>::make(9, kGradChannels, 3, 1, true, &rng);
    p.grad2 = Conv2d<S>::make(kGradChannels, kGradChannels, 3, 1, true, &rng);
    p.grad3 = Conv2d<S>::make(kGradChannels, kGradChannels, 3, 1, true, &rng);
    p.grad_head = Conv2d<S>::make(kGradChannels, 1, 1, 1, true, &rng);
    p.fc1 = Dense<S>::make(kHistogramBins, 256, &rng);
    p.fc2 = Dense<S>::make(256, 128, &rng);
    p.fc3 = Dense<S>::make(128, 64, &rng);
    p.fc4 = Dense<S>::make(64, kBrightFeat, &rng);
    // Identity modulation at start: zero head weights, alpha = 1, beta = 0.
    p.aam1.alpha_head = Dense<S>::make(kBrightFeat, kMidChannels, nullptr);
    p.aam1.beta_head = Dense<S>::make(kBrightFeat, kMidChannels, nullptr);
    p.aam2.alpha_head = Dense<S>::make(kBrightFeat, kStemChannels, nullptr);
    p.aam2.beta_head = Dense<S>::make(kBrightFeat, kStemChannels, nullptr);
    p.aam1.alpha_head.bias.setOnes();
    p.aam2.alpha_head.bias.setOnes();
    return p;
  }

  static ActNetParams zeros_like() {
    ActNetParams p = init(0);
    for (auto& v : tensors(p)) Eigen::Map<Vec<S>>(v.data, v.size()).setZero();
    return p;
  }

  Index parameter_count() {
    Index n = 0;
    for (const auto& v : tensors(*this)) n += v.size();
    return n;
  }
};

template <typename S>
std::vector<TensorView<S>> tensors(ActNetParams<S>& p) {
  std::vector<TensorView<S>> out;
  collect(p.stem1, "stem1", out);
  collect(p.stem2, "stem2", out);
  collect(p.down1, "down1", out);
  collect(p.down2, "down2", out);
  collect(p.up1, "up1", out);
  collect(p.up2, "up2", out);
  collect(p.head, "head", out);
  collect(p.aam1.cdc, "aam1.cdc", out);
  collect(p.aam1.conv, "aam1.conv", out);
  collect(p.aam1.alpha_head, "aam1.alpha", out);
  collect(p.aam1.beta_head, "aam1.beta", out);
  collect(p.aam2.cdc, "aam2.cdc", out);
  collect(p.aam2.conv, "aam2.conv", out);
  collect(p.aam2.alpha_head, "aam2.alpha", out);
  collect(p.aam2.beta_head, "aam2.beta", out);
  collect(p.grad1, "grad1", out);
  collect(p.grad2, "grad2", out);
  collect(p.grad3, "grad3", out);
  collect(p.grad_head, "grad_head", out);
  collect(p.fc1, "fc1", out);
  collect(p.fc2, "fc2", out);
  collect(p.fc3, "fc3", out);
  collect(p.fc4, "fc4", out);
  return out;
}

// ---------------------------------------------------------------------------
// Adaptive adjustment module
// ---------------------------------------------------------------------------

template <typename S>
struct AamTrace {
  Planes<S> cdc_out, conv_out, pre;  // pre = blend before ReLU
};

template <typename S>
Planes<S> aam_forward(const Planes<S>& f, const AdjustmentParams<S>& adj,
                      const AamParams<S>& kernels, AamTrace<S>* trace = nullptr) {
  if (adj.theta.size() != f.pixels())
    throw ContractError("aam_forward: theta size mismatch");
  Planes<S> cdc_out = cdc_forward(f, kernels.cdc);
  Planes<S> conv_out = conv_forward(f, kernels.conv);
  Planes<S> y(f.height(), f.width(), f.channels());
  y.mat().array() = cdc_out.mat().array().colwise() * adj.theta.array() +
                    conv_out.mat().array().colwise() * (S(1) - adj.theta.array());
  if (trace) {
    trace->cdc_out = cdc_out;
    trace->conv_out = conv_out;
    trace->pre = y;
  }
  y.mat() = y.mat().cwiseMax(S(0));
  y.mat().array() = y.mat().array().rowwise() * adj.alpha.transpose().array();
  y.mat().rowwise() += adj.beta.transpose();
  return y;
}

template <typename S>
struct AamGrads {
  Vec<S> d_alpha, d_beta, d_theta;
};

template <typename S>
void aam_backward(const Planes<S>& f, const AdjustmentParams<S>& adj,
                  const AamParams<S>& kernels, const AamTrace<S>& trace,
                  const Planes<S>& d_y, AamParams<S>& grad_kernels,
                  AamGrads<S>& grad_adj, Planes<S>* d_f) {
  const auto relu = trace.pre.mat().cwiseMax(S(0));
  grad_adj.d_alpha = (d_y.mat().array() * relu.array()).colwise().sum().transpose();
  grad_adj.d_beta = d_y.mat().colwise().sum().transpose();

  Planes<S> d_pre(f.height(), f.width(), f.channels());
  d_pre.mat().array() = d_y.mat().array().rowwise() * adj.alpha.transpose().array();
  d_pre.mat().array() *= (trace.pre.mat().array() > S(0)).template cast<S>();

  grad_adj.d_theta =
      (d_pre.mat().array() * (trace.cdc_out.mat() - trace.conv_out.mat()).array())
          .rowwise()
          .sum();

  Planes<S> d_cdc(f.height(), f.width(), f.channels());
  d_cdc.mat().array() = d_pre.mat().array().colwise() * adj.theta.array();
  Planes<S> d_conv(f.height(), f.width(), f.channels());
  d_conv.mat().array() =
      d_pre.mat().array().colwise() * (S(1) - adj.theta.array());

  cdc_backward(f, kernels.cdc, d_cdc, grad_kernels.cdc, d_f);
  conv_backward(f, kernels.conv, d_conv, grad_kernels.conv, d_f);
}

// ---------------------------------------------------------------------------
// Branches
// ---------------------------------------------------------------------------

template <typename S>
struct BrightnessBranchTrace {
  Vec<S> hist, h1, h2, h3, h4;
  Vec<S> alpha1, beta1, alpha2, beta2;
};

template <typename S>
void brightness_branch(const Vec<S>& hist, const ActNetParams<S>& p,
                       BrightnessBranchTrace<S>& t) {
  if (hist.size() != kHistogramBins)
    throw ContractError("brightness_branch: histogram must have 256 bins");
  t.hist = hist;
  t.h1 = dense_forward(hist, p.fc1).cwiseMax(S(0));
  t.h2 = dense_forward(t.h1, p.fc2).cwiseMax(S(0));
  t.h3 = dense_forward(t.h2, p.fc3).cwiseMax(S(0));
  t.h4 = dense_forward(t.h3, p.fc4).cwiseMax(S(0));
  t.alpha1 = dense_forward(t.h4, p.aam1.alpha_head);
  t.beta1 = dense_forward(t.h4, p.aam1.beta_head);
  t.alpha2 = dense_forward(t.h4, p.aam2.alpha_head);
  t.beta2 = dense_forward(t.h4, p.aam2.beta_head);
}

template <typename S>
void brightness_branch_backward(const BrightnessBranchTrace<S>& t,
                                const ActNetParams<S>& p, const Vec<S>& d_alpha1,
                                const Vec<S>& d_beta1, const Vec<S>& d_alpha2,
                                const Vec<S>& d_beta2, ActNetParams<S>& g) {
  Vec<S> d_h4 = Vec<S>::Zero(t.h4.size());
  dense_backward(t.h4, p.aam1.alpha_head, d_alpha1, g.aam1.alpha_head, &d_h4);
  dense_backward(t.h4, p.aam1.beta_head, d_beta1, g.aam1.beta_head, &d_h4);
  dense_backward(t.h4, p.aam2.alpha_head, d_alpha2, g.aam2.alpha_head, &d_h4);
  dense_backward(t.h4, p.aam2.beta_head, d_beta2, g.aam2.beta_head, &d_h4);
  d_h4.array() *= (t.h4.array() > S(0)).template cast<S>();
  Vec<S> d_h3 = Vec<S>::Zero(t.h3.size());
  dense_backward(t.h3, p.fc4, d_h4, g.fc4, &d_h3);
  d_h3.array() *= (t.h3.array() > S(0)).template cast<S>();
  Vec<S> d_h2 = Vec<S>::Zero(t.h2.size());
  dense_backward(t.h2, p.fc3, d_h3, g.fc3, &d_h2);
  d_h2.array() *= (t.h2.array() > S(0)).template cast<S>();
  Vec<S> d_h1 = Vec<S>::Zero(t.h1.size());
  dense_backward(t.h1, p.fc2, d_h2, g.fc2, &d_h1);
  d_h1.array() *= (t.h1.array() > S(0)).template cast<S>();
  // The histogram input is piecewise constant in the image; no gradient
  // propagates past it.
  dense_backward(t.hist, p.fc1, d_h1, g.fc1, static_cast<Vec<S>*>(nullptr));
}

template <typename S>
struct GradientBranchTrace {
  Planes<S> g1, g2, g3, theta;  // theta: single channel, high-band resolution
};

/// Three conv+ReLU stages on the 9-channel high band, then a 1x1 projection
/// squashed to a single-channel coefficient map in [0,1].
template <typename S>
Planes<S> gradient_branch(const Planes<S>& high, const ActNetParams<S>& p,
                          GradientBranchTrace<S>* t = nullptr) {
  if (high.channels() != 9)
    throw ContractError("gradient_branch: expected 9 high-band channels");
  Planes<S> g1 = conv_forward(high, p.grad1);
  relu_inplace(g1.mat());
  Planes<S> g2 = conv_forward(g1, p.grad2);
  relu_inplace(g2.mat());
  Planes<S> g3 = conv_forward(g2, p.grad3);
  relu_inplace(g3.mat());
  Planes<S> theta = conv_forward(g3, p.grad_head);
  sigmoid_inplace(theta.mat());
  if (t) {
    t->g1 = g1;
    t->g2 = g2;
    t->g3 = g3;
    t->theta = theta;
  }
  return theta;
}

template <typename S>
void gradient_branch_backward(const Planes<S>& high, const ActNetParams<S>& p,
                              const GradientBranchTrace<S>& t,
                              const Planes<S>& d_theta, ActNetParams<S>& g,
                              Planes<S>* d_high) {
  Planes<S> d_pre = d_theta;
  d_pre.mat().array() *=
      t.theta.mat().array() * (S(1) - t.theta.mat().array());
  Planes<S> d_g3 = Planes<S>::zero(t.g3.height(), t.g3.width(), t.g3.channels());
  conv_backward(t.g3, p.grad_head, d_pre, g.grad_head, &d_g3);
  d_g3.mat().array() *= (t.g3.mat().array() > S(0)).template cast<S>();
  Planes<S> d_g2 = Planes<S>::zero(t.g2.height(), t.g2.width(), t.g2.channels());
  conv_backward(t.g2, p.grad3, d_g3, g.grad3, &d_g2);
  d_g2.mat().array() *= (t.g2.mat().array() > S(0)).template cast<S>();
  Planes<S> d_g1 = Planes<S>::zero(t.g1.height(), t.g1.width(), t.g1.channels());
  conv_backward(t.g1, p.grad2, d_g2, g.grad2, &d_g1);
  d_g1.mat().array() *= (t.g1.mat().array() > S(0)).template cast<S>();
  conv_backward(high, p.grad1, d_g1, g.grad1, d_high);
}

// ---------------------------------------------------------------------------
// Full network
// ---------------------------------------------------------------------------

template <typename S>
struct ActWorkspace {
  Planes<S> input;
  WaveletBands<S> bands;
  BrightnessBranchTrace<S> bright;
  GradientBranchTrace<S> grad;
  Vec<S> theta1, theta2;  // resized to the two decoder resolutions
  Planes<S> s1, s2, d1, d2;
  Planes<S> c1, c2;  // decoder convs, post-ReLU
  AamTrace<S> aam1, aam2;
  Planes<S> map;  // final curve map
};

template <typename S>
Planes<S> act_forward(const Planes<S>& img, const ActNetParams<S>& p,
                      ActWorkspace<S>* ws = nullptr) {
  if (img.channels() != 3) throw ContractError("act_forward: need 3 channels");
  if (img.height() < 8 || img.width() < 8)
    throw InputError("act_forward: image smaller than 8x8");
  if (img.height() % 4 || img.width() % 4)
    throw ContractError("act_forward: dimensions must be divisible by 4");
  const Index h = img.height(), w = img.width();

  ActWorkspace<S> local;
  ActWorkspace<S>& s = ws ? *ws : local;
  s.input = img;
  s.bands = haar_decompose(img);
  brightness_branch(brightness_histogram(rgb_to_v(s.bands.low)), p, s.bright);
  gradient_branch(s.bands.high, p, &s.grad);
  s.theta1 = bilinear_resize(s.grad.theta, h / 2, w / 2).mat().col(0);
  s.theta2 = bilinear_resize(s.grad.theta, h, w).mat().col(0);

  s.s1 = conv_forward(img, p.stem1);
  relu_inplace(s.s1.mat());
  s.s2 = conv_forward(s.s1, p.stem2);
  relu_inplace(s.s2.mat());
  s.d1 = conv_forward(s.s2, p.down1);
  relu_inplace(s.d1.mat());
  s.d2 = conv_forward(s.d1, p.down2);
  relu_inplace(s.d2.mat());

  s.c1 = conv_forward(upsample2x(s.d2), p.up1);
  relu_inplace(s.c1.mat());
  Planes<S> f1 = s.c1;
  f1.mat() += s.d1.mat();  // additive skip
  Planes<S> a1 = aam_forward(f1, {s.bright.alpha1, s.bright.beta1, s.theta1},
                             p.aam1, &s.aam1);

  s.c2 = conv_forward(upsample2x(a1), p.up2);
  relu_inplace(s.c2.mat());
  Planes<S> f2 = s.c2;
  f2.mat() += s.s2.mat();
  Planes<S> a2 = aam_forward(f2, {s.bright.alpha2, s.bright.beta2, s.theta2},
                             p.aam2, &s.aam2);

  s.map = conv_forward(a2, p.head);
  sigmoid_inplace(s.map.mat());
  return s.map;
}

namespace detail {
template <typename S>
Planes<S> aam_output(const AamTrace<S>& t, const Vec<S>& alpha, const Vec<S>& beta) {
  Planes<S> y = t.pre;
  y.mat() = y.mat().cwiseMax(S(0));
  y.mat().array() = y.mat().array().rowwise() * alpha.transpose().array();
  y.mat().rowwise() += beta.transpose();
  return y;
}
}  // namespace detail

/// Accumulates parameter gradients into `g`; when d_img != nullptr also
/// accumulates the gradient with respect to the input image (through the
/// convolutional path and the Haar high band; the two histogram paths are
/// piecewise constant and contribute nothing).
template <typename S>
void act_backward(const ActNetParams<S>& p, const ActWorkspace<S>& s,
                  const Planes<S>& d_map, ActNetParams<S>& g,
                  Planes<S>* d_img = nullptr) {
  const Index h = s.input.height(), w = s.input.width();

  Planes<S> d_head_pre = d_map;
  d_head_pre.mat().array() *=
      s.map.mat().array() * (S(1) - s.map.mat().array());

  Planes<S> a2 = detail::aam_output(s.aam2, s.bright.alpha2, s.bright.beta2);
  Planes<S> d_a2 = Planes<S>::zero(h, w, kStemChannels);
  conv_backward(a2, p.head, d_head_pre, g.head, &d_a2);

  Planes<S> f2 = s.c2;
  f2.mat() += s.s2.mat();
  AamGrads<S> ag2;
  Planes<S> d_f2 = Planes<S>::zero(h, w, kStemChannels);
  aam_backward(f2, {s.bright.alpha2, s.bright.beta2, s.theta2}, p.aam2, s.aam2,
               d_a2, g.aam2, ag2, &d_f2);

  Planes<S> d_s2 = d_f2;  // skip branch; conv branch adds more below
  Planes<S> d_c2 = std::move(d_f2);
  d_c2.mat().array() *= (s.c2.mat().array() > S(0)).template cast<S>();
  Planes<S> a1 = detail::aam_output(s.aam1, s.bright.alpha1, s.bright.beta1);
  Planes<S> d_u2 = Planes<S>::zero(h, w, kMidChannels);
  conv_backward(upsample2x(a1), p.up2, d_c2, g.up2, &d_u2);
  Planes<S> d_a1 = bilinear_resize_backward(d_u2, h / 2, w / 2);

  Planes<S> f1 = s.c1;
  f1.mat() += s.d1.mat();
  AamGrads<S> ag1;
  Planes<S> d_f1 = Planes<S>::zero(h / 2, w / 2, kMidChannels);
  aam_backward(f1, {s.bright.alpha1, s.bright.beta1, s.theta1}, p.aam1, s.aam1,
               d_a1, g.aam1, ag1, &d_f1);

  Planes<S> d_d1 = d_f1;  // skip branch
  Planes<S> d_c1 = std::move(d_f1);
  d_c1.mat().array() *= (s.c1.mat().array() > S(0)).template cast<S>();
  Planes<S> d_u1 = Planes<S>::zero(h / 2, w / 2, kBottomChannels);
  conv_backward(upsample2x(s.d2), p.up1, d_c1, g.up1, &d_u1);

  Planes<S> d_d2 = bilinear_resize_backward(d_u1, h / 4, w / 4);
  d_d2.mat().array() *= (s.d2.mat().array() > S(0)).template cast<S>();
  conv_backward(s.d1, p.down2, d_d2, g.down2, &d_d1);

  d_d1.mat().array() *= (s.d1.mat().array() > S(0)).template cast<S>();
  conv_backward(s.s2, p.down1, d_d1, g.down1, &d_s2);

  d_s2.mat().array() *= (s.s2.mat().array() > S(0)).template cast<S>();
  Planes<S> d_s1 = Planes<S>::zero(h, w, kStemChannels);
  conv_backward(s.s1, p.stem2, d_s2, g.stem2, &d_s1);

  d_s1.mat().array() *= (s.s1.mat().array() > S(0)).template cast<S>();
  conv_backward(s.input, p.stem1, d_s1, g.stem1, d_img);

  // theta path back through the resizes into the gradient branch
  Planes<S> d_t1(h / 2, w / 2, 1), d_t2(h, w, 1);
  d_t1.mat().col(0) = ag1.d_theta;
  d_t2.mat().col(0) = ag2.d_theta;
  Planes<S> d_theta =
      bilinear_resize_backward(d_t1, h / 2, w / 2);
  d_theta.mat() += bilinear_resize_backward(d_t2, h / 2, w / 2).mat();
  if (d_img) {
    Planes<S> d_high = Planes<S>::zero(h / 2, w / 2, 9);
    gradient_branch_backward(s.bands.high, p, s.grad, d_theta, g, &d_high);
    d_img->mat() += haar_high_backward(d_high).mat();
  } else {
    gradient_branch_backward(s.bands.high, p, s.grad, d_theta, g,
                             static_cast<Planes<S>*>(nullptr));
  }

  brightness_branch_backward(s.bright, p, ag1.d_alpha, ag1.d_beta, ag2.d_alpha,
                             ag2.d_beta, g);
}

}  // namespace relight

#endif  // RELIGHT_ACTNET_HPP
