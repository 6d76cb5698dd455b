#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "relight/actnet.hpp"
#include "testutil.hpp"

using namespace relight;

TEST_CASE("brightness branch starts as the identity modulation") {
  auto p = ActNetParams<double>::init(5);
  Vec<double> hist = Vec<double>::Zero(kHistogramBins);
  hist[40] = 1.0;
  BrightnessBranchTrace<double> t;
  brightness_branch(hist, p, t);
  CHECK((t.alpha1.array() - 1.0).abs().maxCoeff() == doctest::Approx(0.0));
  CHECK(t.beta1.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  CHECK((t.alpha2.array() - 1.0).abs().maxCoeff() == doctest::Approx(0.0));
  CHECK(t.beta2.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  CHECK(t.alpha1.size() == kMidChannels);
  CHECK(t.alpha2.size() == kStemChannels);
  CHECK(t.beta1.size() == kMidChannels);
  CHECK(t.beta2.size() == kStemChannels);
}

TEST_CASE("brightness branch is bin-position sensitive") {
  // Make the heads non-trivial first; permuted equal-mass bins must then
  // produce different outputs in general.
  Rng rng(99);
  auto p = ActNetParams<double>::init(6);
  for (Index i = 0; i < p.aam1.alpha_head.weight.size(); ++i)
    p.aam1.alpha_head.weight.data()[i] = rng.uniform(-0.5, 0.5);
  Vec<double> a = Vec<double>::Zero(kHistogramBins);
  Vec<double> b = Vec<double>::Zero(kHistogramBins);
  a[10] = 0.5;
  a[200] = 0.5;
  b[11] = 0.5;
  b[199] = 0.5;
  BrightnessBranchTrace<double> ta, tb;
  brightness_branch(a, p, ta);
  brightness_branch(b, p, tb);
  CHECK((ta.alpha1 - tb.alpha1).cwiseAbs().maxCoeff() > 1e-8);
}

TEST_CASE("gradient branch squashes zero input to one half") {
  auto p = ActNetParams<double>::init(7);
  // zero conv biases are the default; zero the weights' effect by zero input
  const Planes<double> high = Planes<double>::zero(8, 8, 9);
  const Planes<double> theta = gradient_branch(high, p);
  CHECK(theta.channels() == 1);
  CHECK((theta.mat().array() - 0.5).abs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("gradient branch output lies in (0,1) and resizes to stage sizes") {
  Rng rng(101);
  auto p = ActNetParams<double>::init(8);
  const Planes<double> high = testutil::random_image(rng, 8, 8, 9, -1, 1);
  const Planes<double> theta = gradient_branch(high, p);
  CHECK(theta.mat().minCoeff() > 0.0);
  CHECK(theta.mat().maxCoeff() < 1.0);
  const Planes<double> up = bilinear_resize(theta, 16, 16);
  CHECK(up.height() == 16);
  CHECK(up.width() == 16);
  CHECK(up.mat().minCoeff() > 0.0);
  CHECK(up.mat().maxCoeff() < 1.0);
}

namespace {

AdjustmentParams<double> random_adjust(Rng& rng, Index pixels, Index channels) {
  AdjustmentParams<double> adj;
  adj.alpha.resize(channels);
  adj.beta.resize(channels);
  adj.theta.resize(pixels);
  for (Index i = 0; i < channels; ++i) {
    adj.alpha[i] = rng.uniform(0.5, 1.5);
    adj.beta[i] = rng.uniform(-0.2, 0.2);
  }
  for (Index i = 0; i < pixels; ++i) adj.theta[i] = rng.uniform(0.0, 1.0);
  return adj;
}

AamParams<double> random_aam(Rng& rng, int channels) {
  AamParams<double> k;
  k.cdc = Conv2d<double>::make(channels, channels, 3, 1, false, &rng);
  k.conv = Conv2d<double>::make(channels, channels, 3, 1, true, &rng);
  k.alpha_head = Dense<double>::make(kBrightFeat, channels, nullptr);
  k.beta_head = Dense<double>::make(kBrightFeat, channels, nullptr);
  return k;
}

}  // namespace

TEST_CASE("aam theta=0 path is bitwise the vanilla path") {
  Rng rng(103);
  const int ch = 4;
  auto kernels = random_aam(rng, ch);
  const Planes<double> f = testutil::random_image(rng, 8, 8, ch, -1, 1);
  auto adj = random_adjust(rng, f.pixels(), ch);
  adj.theta.setZero();
  const Planes<double> got = aam_forward(f, adj, kernels);

  Planes<double> want = conv_forward(f, kernels.conv);
  want.mat() = want.mat().cwiseMax(0.0);
  want.mat().array() = want.mat().array().rowwise() * adj.alpha.transpose().array();
  want.mat().rowwise() += adj.beta.transpose();
  CHECK((got.mat() - want.mat()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("aam theta=1 path is bitwise the cdc path") {
  Rng rng(107);
  const int ch = 4;
  auto kernels = random_aam(rng, ch);
  const Planes<double> f = testutil::random_image(rng, 8, 8, ch, -1, 1);
  auto adj = random_adjust(rng, f.pixels(), ch);
  adj.theta.setOnes();
  const Planes<double> got = aam_forward(f, adj, kernels);

  Planes<double> want = cdc_forward(f, kernels.cdc);
  want.mat() = want.mat().cwiseMax(0.0);
  want.mat().array() = want.mat().array().rowwise() * adj.alpha.transpose().array();
  want.mat().rowwise() += adj.beta.transpose();
  CHECK((got.mat() - want.mat()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("aam theta=1 on a constant image with zero bias returns beta") {
  Rng rng(109);
  const int ch = 3;
  auto kernels = random_aam(rng, ch);
  kernels.conv.bias.setZero();
  const Planes<double> f = Planes<double>::constant(8, 8, ch, 0.6);
  auto adj = random_adjust(rng, f.pixels(), ch);
  adj.theta.setOnes();
  const Planes<double> got = aam_forward(f, adj, kernels);
  for (Index c = 0; c < ch; ++c)
    CHECK((got.plane(c).array() - adj.beta[c]).abs().maxCoeff() < 1e-12);
}

TEST_CASE("aam alpha=0 collapses to beta") {
  Rng rng(113);
  const int ch = 3;
  auto kernels = random_aam(rng, ch);
  const Planes<double> f = testutil::random_image(rng, 8, 8, ch);
  auto adj = random_adjust(rng, f.pixels(), ch);
  adj.alpha.setZero();
  const Planes<double> got = aam_forward(f, adj, kernels);
  for (Index c = 0; c < ch; ++c)
    CHECK((got.plane(c).array() - adj.beta[c]).abs().maxCoeff() < 1e-12);
}

TEST_CASE("aam gradients match finite differences") {
  Rng rng(127);
  const int ch = 4;
  auto kernels = random_aam(rng, ch);
  Planes<double> f = testutil::random_image(rng, 8, 8, ch, -1, 1);
  auto adj = random_adjust(rng, f.pixels(), ch);
  Planes<double> sel = testutil::random_image(rng, 8, 8, ch, -1, 1);

  auto loss = [&] {
    return (aam_forward(f, adj, kernels).mat().array() * sel.mat().array()).sum();
  };

  AamTrace<double> trace;
  aam_forward(f, adj, kernels, &trace);
  auto grad_kernels = random_aam(rng, ch);
  for (auto* m : {&grad_kernels.cdc.weight, &grad_kernels.conv.weight})
    m->setZero();
  grad_kernels.conv.bias.setZero();
  AamGrads<double> ga;
  Planes<double> d_f = Planes<double>::zero(8, 8, ch);
  aam_backward(f, adj, kernels, trace, sel, grad_kernels, ga, &d_f);

  testutil::GradCheck gc;
  CHECK(gc.max_rel_error(loss, f.mat().data(), d_f.mat().data(), f.mat().size(),
                         rng) < 1e-3);
  CHECK(gc.max_rel_error(loss, kernels.cdc.weight.data(),
                         grad_kernels.cdc.weight.data(),
                         kernels.cdc.weight.size(), rng) < 1e-3);
  CHECK(gc.max_rel_error(loss, kernels.conv.weight.data(),
                         grad_kernels.conv.weight.data(),
                         kernels.conv.weight.size(), rng) < 1e-3);
  CHECK(gc.max_rel_error(loss, kernels.conv.bias.data(),
                         grad_kernels.conv.bias.data(),
                         kernels.conv.bias.size(), rng) < 1e-3);
  CHECK(gc.max_rel_error(loss, adj.theta.data(), ga.d_theta.data(),
                         adj.theta.size(), rng) < 1e-3);
  CHECK(gc.max_rel_error(loss, adj.alpha.data(), ga.d_alpha.data(),
                         adj.alpha.size(), rng) < 1e-3);
  CHECK(gc.max_rel_error(loss, adj.beta.data(), ga.d_beta.data(),
                         adj.beta.size(), rng) < 1e-3);
}

TEST_CASE("act_forward output contract") {
  Rng rng(131);
  auto p = ActNetParams<double>::init(9);
  const Planes<double> img = testutil::random_image(rng, 16, 12);
  const Planes<double> m = act_forward(img, p);
  CHECK(m.height() == 16);
  CHECK(m.width() == 12);
  CHECK(m.channels() == 3);
  CHECK(m.mat().minCoeff() >= 0.0);
  CHECK(m.mat().maxCoeff() <= 1.0);
  CHECK(m.all_finite());

  const Planes<double> m2 = act_forward(img, p);
  CHECK((m.mat() - m2.mat()).cwiseAbs().maxCoeff() == 0.0);  // deterministic
}

TEST_CASE("act_forward stays in [0,1] and finite across parameter draws") {
  Rng rng(137);
  for (int i = 0; i < 100; ++i) {
    auto p = ActNetParams<double>::init(1000 + i);
    const Planes<double> img = testutil::random_image(rng, 8, 8);
    const Planes<double> m = act_forward(img, p);
    REQUIRE(m.all_finite());
    CHECK(m.mat().minCoeff() >= 0.0);
    CHECK(m.mat().maxCoeff() <= 1.0);
  }
}

TEST_CASE("act_forward rejects bad shapes") {
  auto p = ActNetParams<double>::init(10);
  CHECK_THROWS_AS(act_forward(Planes<double>::constant(4, 4, 3, 0.5), p),
                  InputError);
  CHECK_THROWS_AS(act_forward(Planes<double>::constant(10, 12, 3, 0.5), p),
                  ContractError);
  CHECK_THROWS_AS(act_forward(Planes<double>::constant(8, 8, 1, 0.5), p),
                  ContractError);
}

TEST_CASE("act parameter count is stable") {
  auto p = ActNetParams<double>::init(11);
  CHECK(p.parameter_count() == 408436);
}

TEST_CASE("act_forward gradients match finite differences") {
  auto p = ActNetParams<double>::init(12);
  // Give the modulation heads non-trivial weights so their gradients are
  // exercised too.
  Rng wrng(139);
  for (auto* d : {&p.aam1.alpha_head, &p.aam1.beta_head, &p.aam2.alpha_head,
                  &p.aam2.beta_head})
    for (Index i = 0; i < d->weight.size(); ++i)
      d->weight.data()[i] = wrng.uniform(-0.05, 0.05);

  Planes<double> img = testutil::bin_safe_image(141, 8, 8);
  Planes<double> sel = testutil::random_image(wrng, 8, 8, 3, -1, 1);

  auto loss = [&] {
    return (act_forward(img, p).mat().array() * sel.mat().array()).sum();
  };

  ActWorkspace<double> ws;
  act_forward(img, p, &ws);
  auto g = ActNetParams<double>::zeros_like();
  Planes<double> d_img = Planes<double>::zero(8, 8, 3);
  act_backward(p, ws, sel, g, &d_img);

  testutil::GradCheck gc;
  gc.max_coords = 40;
  Rng rng(149);
  CHECK(gc.max_rel_error(loss, img.mat().data(), d_img.mat().data(),
                         img.mat().size(), rng) < 1e-3);

  auto pv = tensors(p);
  auto gv = tensors(g);
  for (std::size_t i = 0; i < pv.size(); ++i) {
    CAPTURE(pv[i].name);
    gc.max_coords = 8;
    CHECK(gc.max_rel_error(loss, pv[i].data, gv[i].data, pv[i].size(), rng) < 1e-3);
  }
}
