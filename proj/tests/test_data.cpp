#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <map>

#include "imageio.hpp"
#include "relight/data.hpp"
#include "testutil.hpp"

using namespace relight;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("relight_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("bucketing table matches the level ranges") {
  CHECK(bucket_of(0.10) == Level::kLevel1);
  CHECK(bucket_of(0.15) == Level::kLevel2);
  CHECK(bucket_of(0.30) == Level::kLevel3);
  CHECK(bucket_of(0.45) == Level::kLevel4);
  CHECK(bucket_of(0.55) == Level::kLevel4);
  CHECK(bucket_of(0.60) == Level::kLevel4);
  CHECK(bucket_of(0.62) == std::nullopt);
  CHECK(bucket_of(0.0) == Level::kLevel1);
  CHECK(bucket_of(-0.1) == std::nullopt);
}

TEST_CASE("manifest round-trips losslessly") {
  DatasetManifest m;
  m.records.push_back({"a/img_001.png", 0.123456789012345, Level::kLevel1,
                       Split::kTrain});
  m.records.push_back({"b/img_002.png", 0.45, Level::kLevel4, Split::kTest});
  m.records.push_back({"c d/img 003.png", 0.2999999999999999, Level::kLevel2,
                       Split::kTrain});
  const fs::path dir = temp_dir("manifest");
  m.save(dir / "manifest.txt");
  const DatasetManifest back = DatasetManifest::load(dir / "manifest.txt");
  REQUIRE(back.records.size() == m.records.size());
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    CHECK(back.records[i].path == m.records[i].path);
    CHECK(back.records[i].mean_brightness == m.records[i].mean_brightness);
    CHECK(back.records[i].level == m.records[i].level);
    CHECK(back.records[i].split == m.records[i].split);
  }
  CHECK(back.count(Level::kLevel1) == 1);
  CHECK(back.count(Level::kLevel4) == 1);
}

TEST_CASE("split is stable, seeded and disjoint") {
  const std::string name = "some/dir/img_42.png";
  const Split s = split_of(name, 0.25, 7);
  CHECK(split_of(name, 0.25, 7) == s);
  CHECK(split_of("other/dir/img_42.png", 0.25, 7) == s);  // filename-keyed
  CHECK(split_of(name, 0.0, 7) == Split::kTrain);
  CHECK(split_of(name, 0.9999999, 7) == Split::kTest);

  int test_count = 0;
  const int n = 2000;
  for (int i = 0; i < n; ++i)
    if (split_of("img_" + std::to_string(i) + ".png", 0.25, 7) == Split::kTest)
      ++test_count;
  CHECK(test_count > n * 0.2);
  CHECK(test_count < n * 0.3);
}

TEST_CASE("synthetic darkening lands in the requested bucket") {
  Rng rng(31);
  Planes<double> base = testutil::random_image(rng, 32, 32, 3, 0.45, 0.95);
  REQUIRE(mean_brightness(base) > 0.6);
  for (Level level : {Level::kLevel1, Level::kLevel2, Level::kLevel3, Level::kLevel4}) {
    const Planes<double> dark = synthetic_darken(base, level);
    CHECK(bucket_of(mean_brightness(dark)) == level);
    CHECK(dark.mat().minCoeff() >= 0.0);
    CHECK(dark.mat().maxCoeff() <= 1.0);
  }
  // too-dark base is rejected
  Planes<double> dim = base;
  dim.mat() *= 0.3;
  CHECK_THROWS_AS(synthetic_darken(dim, Level::kLevel4), InputError);
}

TEST_CASE("darken(1, 1) is the identity") {
  Rng rng(37);
  const Planes<double> img = testutil::random_image(rng, 8, 8);
  CHECK((darken(img, 1.0, 1.0).mat() - img.mat()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("sample_batch shapes, filtering and determinism") {
  DatasetManifest m;
  std::map<std::string, Planes<double>> store;
  Rng gen(41);
  for (int i = 0; i < 6; ++i) {
    const std::string path = "mem://l4_" + std::to_string(i);
    store.emplace(path, testutil::random_image(gen, 40, 40, 3, 0.45, 0.6));
    m.records.push_back({path, 0.5, Level::kLevel4, Split::kTrain});
  }
  for (int i = 0; i < 3; ++i) {
    const std::string path = "mem://l1_" + std::to_string(i);
    store.emplace(path, testutil::random_image(gen, 20, 20, 3, 0.0, 0.1));
    m.records.push_back({path, 0.05, Level::kLevel1, Split::kTrain});
  }
  const ImageLoader<double> loader =
      [&store](const std::string& p) -> std::optional<Planes<double>> {
    auto it = store.find(p);
    if (it == store.end()) return std::nullopt;
    return it->second;
  };

  Rng rng_a(5);
  const auto batch =
      sample_batch(m, {Level::kLevel4}, 4, 32, rng_a, loader);
  REQUIRE(batch.size() == 4);
  for (const auto& img : batch) {
    CHECK(img.height() == 32);
    CHECK(img.width() == 32);
    CHECK(img.channels() == 3);
    CHECK(mean_brightness(img) >= 0.4);  // all draws came from Level_4
  }

  // smaller-than-patch images come back padded to a multiple of 4
  Rng rng_pad(6);
  const auto small = sample_batch(m, {Level::kLevel1}, 2, 32, rng_pad, loader);
  CHECK(small[0].height() == 20);
  CHECK(small[0].width() == 20);

  Rng rng_b(5);
  const auto batch2 = sample_batch(m, {Level::kLevel4}, 4, 32, rng_b, loader);
  for (std::size_t i = 0; i < batch.size(); ++i)
    CHECK((batch[i].mat() - batch2[i].mat()).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(sample_batch(m, {Level::kLevel2}, 2, 32, rng_a, loader),
                  InputError);
}

TEST_CASE("scan_and_bucket on a real directory") {
  const fs::path dir = temp_dir("scan");
  Rng rng(43);
  // two usable images, one too bright, one junk file
  write_image_png(dir / "dark.png",
                  testutil::random_image(rng, 16, 16, 3, 0.0, 0.2));
  write_image_png(dir / "dim.png",
                  testutil::random_image(rng, 16, 16, 3, 0.3, 0.55));
  write_image_png(dir / "bright.png",
                  Planes<double>::constant(16, 16, 3, 0.9));
  {
    std::ofstream junk(dir / "notes.txt");
    junk << "not an image";
  }

  const ImageLoader<double> loader = [](const std::string& p) {
    return try_read_image<double>(p);
  };
  std::ostringstream warnings;
  const DatasetManifest m = scan_and_bucket(dir, loader, 0.25, 7, &warnings);
  CHECK(m.records.size() == 2);
  CHECK(warnings.str().find("bright.png") != std::string::npos);
  CHECK(warnings.str().find("notes.txt") != std::string::npos);
  // deterministic re-scan
  const DatasetManifest m2 = scan_and_bucket(dir, loader, 0.25, 7, nullptr);
  REQUIRE(m2.records.size() == m.records.size());
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    CHECK(m.records[i].path == m2.records[i].path);
    CHECK(m.records[i].split == m2.records[i].split);
  }

  const fs::path empty = temp_dir("scan_empty");
  CHECK_THROWS_AS(scan_and_bucket(empty, loader, 0.25, 7, nullptr), InputError);
}

TEST_CASE("png round-trip through the codec layer") {
  const fs::path dir = temp_dir("png");
  Rng rng(47);
  const Planes<double> img = testutil::random_image(rng, 9, 13);
  write_image_png(dir / "img.png", img);
  const Planes<double> back = read_image<double>(dir / "img.png");
  REQUIRE(back.height() == 9);
  REQUIRE(back.width() == 13);
  // 8-bit quantization error bound
  CHECK((back.mat() - img.mat()).cwiseAbs().maxCoeff() < 0.5 / 255 + 1e-9);
  CHECK_THROWS_AS(read_image<double>(dir / "missing.png"), InputError);
}
