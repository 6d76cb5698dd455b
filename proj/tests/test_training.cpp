#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "relight/training.hpp"
#include "testutil.hpp"

using namespace relight;
namespace fs = std::filesystem;

namespace {

struct MicroWorld {
  DatasetManifest manifest;
  std::map<std::string, Planes<float>> store;
  ImageLoader<float> loader;
  TrainingConfig cfg;

  MicroWorld() {
    Rng gen(404);
    auto add = [&](Level level, double lo, double hi, int count, Split split) {
      for (int i = 0; i < count; ++i) {
        const std::string path = "mem://" + to_string(level) + "_" +
                                 (split == Split::kTrain ? "tr" : "te") +
                                 std::to_string(i);
        Planes<float> img = testutil::random_image_s<float>(gen, 16, 16, 3, lo, hi);
        manifest.records.push_back(
            {path, mean_brightness(img), bucket_of(mean_brightness(img)).value(),
             split});
        store.emplace(path, std::move(img));
      }
    };
    // narrow per-pixel ranges keep the V-channel mean inside the bucket
    add(Level::kLevel4, 0.47, 0.56, 3, Split::kTrain);
    add(Level::kLevel4, 0.47, 0.56, 1, Split::kTest);
    add(Level::kLevel2, 0.16, 0.26, 3, Split::kTrain);
    add(Level::kLevel1, 0.02, 0.12, 2, Split::kTrain);
    loader = [this](const std::string& p) -> std::optional<Planes<float>> {
      auto it = store.find(p);
      if (it == store.end()) return std::nullopt;
      return it->second;
    };
    cfg.batch_size = 2;
    cfg.patch_size = 16;
    cfg.epochs = 2;
    cfg.epochs_bp = 40;
    cfg.learning_rate = 1e-3;
    cfg.seed = 99;
    cfg.threads = 2;
  }
};

std::string file_text(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("relight_train_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

template <typename S>
double param_checksum(std::vector<TensorView<S>> views) {
  double sum = 0;
  for (const auto& v : views)
    sum += Eigen::Map<const Vec<S>>(v.data, v.size()).template cast<double>().sum();
  return sum;
}

}  // namespace

TEST_CASE("three stages run end to end at micro scale") {
  MicroWorld w;

  std::ostringstream act_steps;
  TrainLogs act_logs{&act_steps, nullptr};
  StageReport act_report;
  auto ckpt_a =
      pretrain_act<float>(w.manifest, w.loader, w.cfg, act_logs, {}, &act_report);
  CHECK(ckpt_a.stage == TrainStage::kPretrainAct);
  CHECK(ckpt_a.epoch == 2);
  CHECK_FALSE(ckpt_a.bp.has_value());
  CHECK(act_report.epochs.size() == 2);
  CHECK(std::isfinite(act_report.epochs.back().val_brightness));
  CHECK(act_steps.str().find("stage=act") != std::string::npos);

  const double act_sum_before = param_checksum(tensors(ckpt_a.act));
  auto ckpt_b = pretrain_bp<float>(w.manifest, w.loader, ckpt_a, w.cfg);
  CHECK(ckpt_b.stage == TrainStage::kPretrainBp);
  REQUIRE(ckpt_b.bp.has_value());
  // ACT is frozen through stage (b), bit for bit
  CHECK(param_checksum(tensors(ckpt_b.act)) == act_sum_before);
  auto va = tensors(ckpt_a.act);
  auto vb = tensors(ckpt_b.act);
  for (std::size_t i = 0; i < va.size(); ++i)
    CHECK(std::memcmp(va[i].data, vb[i].data, sizeof(float) * va[i].size()) == 0);

  auto ckpt_c = finetune_joint<float>(w.manifest, w.loader, ckpt_b, w.cfg);
  CHECK(ckpt_c.stage == TrainStage::kFinetuned);
  REQUIRE(ckpt_c.bp.has_value());
  // joint optimization moves both parameter sets
  CHECK(param_checksum(tensors(ckpt_c.act)) != param_checksum(tensors(ckpt_b.act)));
  CHECK(param_checksum(tensors(*ckpt_c.bp)) != param_checksum(tensors(*ckpt_b.bp)));
}

TEST_CASE("stage guards enforce the (a) -> (b) -> (c) order") {
  MicroWorld w;
  auto ckpt_a = pretrain_act<float>(w.manifest, w.loader, w.cfg);
  // act checkpoint into finetune_joint: rejected
  CHECK_THROWS_AS(finetune_joint<float>(w.manifest, w.loader, ckpt_a, w.cfg),
                  ContractError);
  auto ckpt_b = pretrain_bp<float>(w.manifest, w.loader, ckpt_a, w.cfg);
  // bp checkpoint into pretrain_bp as the frozen-act input: rejected
  CHECK_THROWS_AS(pretrain_bp<float>(w.manifest, w.loader, ckpt_b, w.cfg),
                  ContractError);
  // resume with the wrong stage: rejected
  CHECK_THROWS_AS(
      pretrain_act<float>(w.manifest, w.loader, w.cfg, {}, ckpt_b),
      ContractError);
}

TEST_CASE("empty manifests are rejected") {
  MicroWorld w;
  DatasetManifest empty;
  CHECK_THROWS_AS(pretrain_act<float>(empty, w.loader, w.cfg), InputError);
  DatasetManifest no_l4;
  no_l4.records.push_back({"mem://Level_1_tr0", 0.1, Level::kLevel1, Split::kTrain});
  CHECK_THROWS_AS(pretrain_act<float>(no_l4, w.loader, w.cfg), InputError);
}

TEST_CASE("two seeded runs produce identical step logs") {
  MicroWorld w;
  std::ostringstream log1, log2;
  pretrain_act<float>(w.manifest, w.loader, w.cfg, {&log1, nullptr});
  pretrain_act<float>(w.manifest, w.loader, w.cfg, {&log2, nullptr});
  CHECK(log1.str() == log2.str());
  CHECK(!log1.str().empty());

  // and a different seed changes the trajectory
  TrainingConfig other = w.cfg;
  other.seed = 1234567;
  std::ostringstream log3;
  pretrain_act<float>(w.manifest, w.loader, other, {&log3, nullptr});
  CHECK(log1.str() != log3.str());
}

TEST_CASE("checkpoints round-trip bit-exactly and archives are byte-identical") {
  MicroWorld w;
  auto ckpt = pretrain_act<float>(w.manifest, w.loader, w.cfg);
  ckpt.epoch = 17;

  const fs::path dir = temp_dir("ckpt");
  save_checkpoint(ckpt, dir / "a");
  auto loaded = load_checkpoint<float>(dir / "a");
  CHECK(loaded.stage == ckpt.stage);
  CHECK(loaded.epoch == 17);
  CHECK(loaded.config.learning_rate == ckpt.config.learning_rate);
  CHECK(loaded.config.seed == ckpt.config.seed);
  auto va = tensors(ckpt.act);
  auto vb = tensors(loaded.act);
  for (std::size_t i = 0; i < va.size(); ++i)
    CHECK(std::memcmp(va[i].data, vb[i].data, sizeof(float) * va[i].size()) == 0);

  // save -> load -> save gives byte-identical archives
  save_checkpoint(loaded, dir / "b");
  CHECK(file_text(dir / "a" / "params.bin") == file_text(dir / "b" / "params.bin"));
  CHECK(file_text(dir / "a" / "meta.txt") == file_text(dir / "b" / "meta.txt"));
}

TEST_CASE("checkpoint errors: missing, corrupt, version mismatch") {
  const fs::path dir = temp_dir("ckpt_err");
  CHECK_THROWS_AS(load_checkpoint<float>(dir / "nope"), InputError);

  MicroWorld w;
  TrainingConfig tiny = w.cfg;
  tiny.epochs = 1;
  auto ckpt = pretrain_act<float>(w.manifest, w.loader, tiny);
  save_checkpoint(ckpt, dir / "ok");

  // corrupt the blob
  fs::copy(dir / "ok", dir / "bad", fs::copy_options::recursive);
  {
    std::ofstream trunc(dir / "bad" / "params.bin",
                        std::ios::binary | std::ios::trunc);
    trunc << "RLTCKPT1 garbage";
  }
  CHECK_THROWS_AS(load_checkpoint<float>(dir / "bad"), InputError);

  // bump the version
  fs::copy(dir / "ok", dir / "vers", fs::copy_options::recursive);
  {
    std::string meta = file_text(dir / "vers" / "meta.txt");
    meta.replace(meta.find("format_version=1"), 16, "format_version=9");
    std::ofstream out(dir / "vers" / "meta.txt", std::ios::trunc);
    out << meta;
  }
  CHECK_THROWS_AS(load_checkpoint<float>(dir / "vers"), InputError);

  // wrong scalar width
  CHECK_THROWS_AS(load_checkpoint<double>(dir / "ok"), InputError);
}

TEST_CASE("resume continues epoch numbering") {
  MicroWorld w;
  auto first = pretrain_act<float>(w.manifest, w.loader, w.cfg);
  CHECK(first.epoch == 2);
  auto resumed = pretrain_act<float>(w.manifest, w.loader, w.cfg, {}, first);
  CHECK(resumed.epoch == 4);
}

TEST_CASE("unroll depth in stage (c) stays within the recursion bounds") {
  MicroWorld w;
  auto ckpt_a = pretrain_act<float>(w.manifest, w.loader, w.cfg);
  auto ckpt_b = pretrain_bp<float>(w.manifest, w.loader, ckpt_a, w.cfg);
  // direct probe: BP-chosen depths on every training image
  for (const auto& rec : w.manifest.records) {
    const auto& img = w.store.at(rec.path);
    const auto f = bp_forward(brightness_histogram(rgb_to_v(img)),
                              *ckpt_b.bp, w.cfg.bounds);
    CHECK(f.rounded >= 1);
    CHECK(f.rounded <= 10);
  }
  // and the full fine-tune path runs with those depths
  auto ckpt_c = finetune_joint<float>(w.manifest, w.loader, ckpt_b, w.cfg);
  CHECK(ckpt_c.stage == TrainStage::kFinetuned);
}

TEST_CASE("config text round-trip and precedence") {
  TrainingConfig c;
  c.learning_rate = 5e-4;
  c.epochs = 33;
  c.weights.w_tv = 123.5;
  c.exposure_channel = ExposureChannel::kVChannel;
  std::ostringstream os;
  write_config_text(os, c);
  std::istringstream is(os.str());
  const TrainingConfig back = parse_config_text(is);
  CHECK(back.learning_rate == c.learning_rate);
  CHECK(back.epochs == 33);
  CHECK(back.weights.w_tv == 123.5);
  CHECK(back.exposure_channel == ExposureChannel::kVChannel);

  std::istringstream bad("nonsense_key=3\n");
  CHECK_THROWS_AS(parse_config_text(bad), InputError);
  std::istringstream comments("# comment\n  epochs = 7 # trailing\n\n");
  CHECK(parse_config_text(comments).epochs == 7);
}
