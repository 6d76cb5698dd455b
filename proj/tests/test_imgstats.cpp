#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "relight/imgstats.hpp"
#include "testutil.hpp"

using namespace relight;

namespace {

Planes<double> solid(Index h, Index w, double r, double g, double b) {
  Planes<double> img(h, w, 3);
  img.plane(0).setConstant(r);
  img.plane(1).setConstant(g);
  img.plane(2).setConstant(b);
  return img;
}

}  // namespace

TEST_CASE("rgb_to_v is the channel maximum") {
  CHECK(rgb_to_v(solid(2, 2, 0, 0, 0))(0, 0) == 0.0);
  CHECK(rgb_to_v(solid(2, 2, 1, 1, 1))(0, 0) == 1.0);
  CHECK(rgb_to_v(solid(2, 2, 0.2, 0.5, 0.8))(1, 1) == 0.8);
}

TEST_CASE("rgb_to_v scales with uniform channel scaling") {
  Rng rng(7);
  Planes<double> img = testutil::random_image(rng, 6, 5);
  const Mat<double> v = rgb_to_v(img);
  for (double k : {0.25, 0.5, 0.9, 1.0}) {
    Planes<double> scaled = img;
    scaled.mat() *= k;
    CHECK((rgb_to_v(scaled) - k * v).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  }
}

TEST_CASE("mean_brightness") {
  CHECK(mean_brightness(solid(4, 4, 0.3, 0.3, 0.3)) == doctest::Approx(0.3));

  Planes<double> half(2, 2, 3);
  half.mat().setZero();
  half.at(0, 0, 0) = 1.0;
  half.at(0, 1, 1) = 1.0;
  CHECK(mean_brightness(half) == doctest::Approx(0.5));

  Planes<double> two(2, 1, 3);
  two.mat().setZero();
  two.at(0, 0, 2) = 0.1;
  two.at(1, 0, 0) = 0.5;
  CHECK(mean_brightness(two) == doctest::Approx(0.3));

  Rng rng(11);
  for (int i = 0; i < 20; ++i) {
    const double m = mean_brightness(testutil::random_image(rng, 5, 7));
    CHECK(m >= 0.0);
    CHECK(m <= 1.0);
  }
}

TEST_CASE("brightness_histogram bins and normalization") {
  Mat<double> zeros = Mat<double>::Zero(4, 4);
  Vec<double> h = brightness_histogram(zeros);
  CHECK(h[0] == doctest::Approx(1.0));
  CHECK(h.sum() == doctest::Approx(1.0));

  Mat<double> mid = Mat<double>::Constant(4, 4, 0.5);
  h = brightness_histogram(mid);
  CHECK(h[128] == doctest::Approx(1.0));

  Mat<double> ones = Mat<double>::Constant(4, 4, 1.0);  // 256 clamps to bin 255
  h = brightness_histogram(ones);
  CHECK(h[255] == doctest::Approx(1.0));
}

TEST_CASE("histogram is a probability vector on random images") {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const Planes<double> img = testutil::random_image(rng, 6, 6);
    const Vec<double> h = brightness_histogram(rgb_to_v(img));
    CHECK(h.minCoeff() >= 0.0);
    CHECK(std::abs(h.sum() - 1.0) < 1e-9);
  }
}

TEST_CASE("haar on hand-evaluated 2x2 blocks") {
  Planes<double> img(2, 2, 1);
  img.at(0, 0, 0) = 1;
  img.at(0, 1, 0) = 0;
  img.at(1, 0, 0) = 0;
  img.at(1, 1, 0) = 1;
  const auto bands = haar_decompose(img);
  CHECK(bands.low.at(0, 0, 0) == doctest::Approx(0.5));
  CHECK(bands.high.at(0, 0, 0) == doctest::Approx(0.0));   // LH
  CHECK(bands.high.at(0, 0, 1) == doctest::Approx(0.0));   // HL
  CHECK(bands.high.at(0, 0, 2) == doctest::Approx(0.5));   // HH
}

TEST_CASE("haar constant image has zero high bands") {
  const auto bands = haar_decompose(solid(8, 6, 0.4, 0.4, 0.4));
  CHECK(bands.high.mat().cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  CHECK((bands.low.mat().array() - 0.4).abs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("haar checkerboard recovers pattern through the HH band") {
  Planes<double> img(4, 4, 1);
  for (Index y = 0; y < 4; ++y)
    for (Index x = 0; x < 4; ++x) img.at(y, x, 0) = (x + y) % 2 ? 0.0 : 1.0;
  const auto bands = haar_decompose(img);
  CHECK((bands.low.mat().array() - 0.5).abs().maxCoeff() == doctest::Approx(0.0));
  CHECK((bands.high.plane(2).array() - 0.5).abs().maxCoeff() == doctest::Approx(0.0));
  const Planes<double> back = haar_reconstruct(bands);
  CHECK((back.mat() - img.mat()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("haar perfect reconstruction on random images") {
  Rng rng(17);
  for (int i = 0; i < 100; ++i) {
    const Index h = 2 + 2 * static_cast<Index>(rng.uniform_int(0, 6));
    const Index w = 2 + 2 * static_cast<Index>(rng.uniform_int(0, 6));
    const Planes<double> img = testutil::random_image(rng, h, w);
    const Planes<double> back = haar_reconstruct(haar_decompose(img));
    REQUIRE(back.height() == h);
    CHECK((back.mat() - img.mat()).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("haar pads odd sizes and drops the pad on reconstruction") {
  Rng rng(19);
  const Planes<double> img = testutil::random_image(rng, 5, 7);
  const auto bands = haar_decompose(img);
  CHECK(bands.low.height() == 3);
  CHECK(bands.low.width() == 4);
  const Planes<double> back = haar_reconstruct(bands);
  REQUIRE(back.height() == 5);
  REQUIRE(back.width() == 7);
  CHECK((back.mat() - img.mat()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("haar rejects degenerate sizes") {
  CHECK_THROWS_AS(haar_decompose(Planes<double>::zero(1, 8, 3)), ContractError);
  CHECK_THROWS_AS(haar_decompose(Planes<double>::zero(8, 1, 3)), ContractError);
}

TEST_CASE("patch_means tiling") {
  const auto uniform = patch_means(solid(16, 16, 0.6, 0.6, 0.6), 16);
  REQUIRE(uniform.size() == 1);
  CHECK(uniform[0] == doctest::Approx(0.6));
  CHECK(patch_means(solid(32, 16, 0.1, 0.1, 0.1), 16).size() == 2);

  // dark top half, bright bottom half: row-major tile order gives 0,0,1,1
  Planes<double> split(16, 16, 3);
  split.mat().setZero();
  for (Index c = 0; c < 3; ++c) split.plane(c).bottomRows(8).setConstant(1.0);
  const auto means = patch_means(split, 8);
  REQUIRE(means.size() == 4);
  CHECK(means[0] == doctest::Approx(0.0));
  CHECK(means[1] == doctest::Approx(0.0));
  CHECK(means[2] == doctest::Approx(1.0));
  CHECK(means[3] == doctest::Approx(1.0));

  // bright right half: the column split interleaves as 0,1,0,1
  Planes<double> vsplit(16, 16, 3);
  vsplit.mat().setZero();
  for (Index c = 0; c < 3; ++c) vsplit.plane(c).rightCols(8).setConstant(1.0);
  const auto vmeans = patch_means(vsplit, 8);
  REQUIRE(vmeans.size() == 4);
  CHECK(vmeans[0] == doctest::Approx(0.0));
  CHECK(vmeans[1] == doctest::Approx(1.0));
  CHECK(vmeans[2] == doctest::Approx(0.0));
  CHECK(vmeans[3] == doctest::Approx(1.0));
}

TEST_CASE("patch_means averages partial edge tiles over actual pixels") {
  Planes<double> img(3, 5, 1);
  img.plane(0).setConstant(0.25);
  const auto means = patch_means(img, 2);
  REQUIRE(means.size() == 6);  // 2x3 tiles
  for (double m : means) CHECK(m == doctest::Approx(0.25));
}

TEST_CASE("pad and crop round-trip") {
  Rng rng(23);
  const Planes<double> img = testutil::random_image(rng, 5, 6);
  const Planes<double> padded = pad_to_multiple(img, 4);
  CHECK(padded.height() == 8);
  CHECK(padded.width() == 8);
  const Planes<double> back = crop_topleft(padded, 5, 6);
  CHECK((back.mat() - img.mat()).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  // replicated edges
  CHECK(padded.at(7, 2, 0) == doctest::Approx(img.at(4, 2, 0)));
  CHECK(padded.at(3, 7, 1) == doctest::Approx(img.at(3, 5, 1)));
  CHECK(padded.at(7, 7, 2) == doctest::Approx(img.at(4, 5, 2)));
}
