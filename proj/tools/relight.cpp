// relight: recursive low-light image enhancement tool.
//
// Subcommands:
//   prepare   scan a directory into a bucketed dataset manifest
//   train     run one training stage (act | bp | joint) against a manifest
//   enhance   enhance one image with a trained checkpoint
//   evaluate  score (reference, enhanced) image pairs with quality metrics
//
// Exit codes: 0 success, 2 input error, 3 stage/contract violation,
// 4 numerical failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "imageio.hpp"
#include "relight/checkpoint.hpp"
#include "relight/data.hpp"
#include "relight/metrics.hpp"
#include "relight/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace relight;

using TrainScalar = float;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitContract = 3;
constexpr int kExitNumeric = 4;

struct PrepareArgs {
  std::string input_dir, manifest_out, synthetic_from;
  double split_fraction = 0.25;
  std::uint64_t seed = 1234;
};

struct TrainArgs {
  std::string stage, manifest, out, config_path;
  bool resume = false;
  std::vector<std::pair<std::string, std::string>> overrides;  // flag order
};

struct EnhanceArgs {
  std::string checkpoint, input, output, trace_dir;
  int force_n = 0;
};

struct EvaluateArgs {
  std::string pairs, report_out;
  std::string metrics = "psnr,ssim,eme,loe";
};

std::vector<std::string> split_csv(const std::string& csv) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : csv) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Every training flag funnels through the same key=value channel as the
// config file, so flag/file equivalence holds by construction. Precedence:
// defaults < config file (--config or LLE_CONFIG) < explicit flags.
void add_config_flag(CLI::App* cmd, TrainArgs& args, const std::string& flag,
                     const std::string& key, const std::string& help) {
  cmd->add_option_function<std::string>(
         flag,
         [&args, key](const std::string& value) {
           args.overrides.emplace_back(key, value);
         },
         help)
      ->type_name("VALUE");
}

TrainingConfig resolve_config(const TrainArgs& args) {
  TrainingConfig cfg;
  std::string path = args.config_path;
  if (path.empty())
    if (const char* env = std::getenv("LLE_CONFIG")) path = env;
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw InputError("cannot read config file: " + path);
    cfg = parse_config_text(is, cfg);
  }
  for (const auto& [key, value] : args.overrides) apply_key_value(cfg, key, value);
  if (!cfg.deterministic) cfg.seed = std::random_device{}();
  cfg.validate();
  return cfg;
}

ImageLoader<TrainScalar> disk_loader() {
  return [](const std::string& path) { return try_read_image<TrainScalar>(path); };
}

int cmd_prepare(const PrepareArgs& args) {
  const fs::path input_dir = args.input_dir;
  if (!args.synthetic_from.empty()) {
    fs::create_directories(input_dir);
    std::vector<fs::path> bases;
    if (!fs::is_directory(args.synthetic_from))
      throw InputError("not a directory: " + args.synthetic_from);
    for (const auto& e : fs::directory_iterator(args.synthetic_from))
      if (e.is_regular_file()) bases.push_back(e.path());
    std::sort(bases.begin(), bases.end());
    int written = 0;
    for (const auto& base_path : bases) {
      auto base = try_read_image<TrainScalar>(base_path);
      if (!base) {
        std::cerr << "warning: skipping unreadable base " << base_path << "\n";
        continue;
      }
      for (Level level : {Level::kLevel1, Level::kLevel2, Level::kLevel3,
                          Level::kLevel4}) {
        try {
          const auto dark = synthetic_darken(*base, level);
          const fs::path out = input_dir / (base_path.stem().string() + "_" +
                                            to_string(level) + ".png");
          write_image_png(out, dark);
          ++written;
        } catch (const InputError& e) {
          std::cerr << "warning: " << base_path.filename().string() << " -> "
                    << to_string(level) << ": " << e.what() << "\n";
        }
      }
    }
    std::cout << "synthesized " << written << " darkened images into "
              << input_dir << "\n";
  }

  const auto manifest = scan_and_bucket<TrainScalar>(
      input_dir, disk_loader(), args.split_fraction, args.seed, &std::cerr);
  manifest.save(args.manifest_out);
  std::cout << "manifest: " << args.manifest_out << "\n";
  for (Level level : {Level::kLevel1, Level::kLevel2, Level::kLevel3,
                      Level::kLevel4})
    std::cout << to_string(level) << ": " << manifest.count(level) << "\n";
  int train_n = 0, test_n = 0;
  for (const auto& r : manifest.records)
    (r.split == Split::kTrain ? train_n : test_n) += 1;
  std::cout << "train: " << train_n << "  test: " << test_n << "\n";
  return kExitOk;
}

int cmd_train(const TrainArgs& args) {
  const TrainingConfig cfg = resolve_config(args);
  const DatasetManifest manifest = DatasetManifest::load(args.manifest);
  const auto loader = disk_loader();
  const fs::path out = args.out;
  fs::create_directories(out);

  const fs::path ckpt_path = out / ("checkpoint_" + args.stage);
  std::optional<Checkpoint<TrainScalar>> resume;
  if (args.resume) resume = load_checkpoint<TrainScalar>(ckpt_path);

  const auto mode = args.resume ? std::ios::app : std::ios::trunc;
  std::ofstream step_log(out / ("log_" + args.stage + "_steps.txt"), mode);
  std::ofstream epoch_log(out / ("log_" + args.stage + "_epochs.txt"), mode);
  TrainLogs logs{&step_log, &epoch_log};

  Checkpoint<TrainScalar> result;
  if (args.stage == "act") {
    result = pretrain_act<TrainScalar>(manifest, loader, cfg, logs, resume);
  } else if (args.stage == "bp") {
    Checkpoint<TrainScalar> act_ckpt;
    if (!resume) {
      const fs::path act_path = out / "checkpoint_act";
      if (!fs::exists(act_path / "meta.txt"))
        throw ContractError(
            "stage bp needs a pretrain_act checkpoint in the run directory (" +
            act_path.string() + "); run --stage act first");
      act_ckpt = load_checkpoint<TrainScalar>(act_path);
    }
    result = pretrain_bp<TrainScalar>(manifest, loader, act_ckpt, cfg, logs, resume);
  } else {
    Checkpoint<TrainScalar> bp_ckpt;
    if (!resume) {
      const fs::path bp_path = out / "checkpoint_bp";
      if (!fs::exists(bp_path / "meta.txt"))
        throw ContractError(
            "stage joint needs a pretrain_bp checkpoint in the run directory (" +
            bp_path.string() + "); run --stage bp first");
      bp_ckpt = load_checkpoint<TrainScalar>(bp_path);
    }
    result = finetune_joint<TrainScalar>(manifest, loader, bp_ckpt, cfg, logs, resume);
  }
  save_checkpoint(result, ckpt_path);
  std::cout << "stage " << args.stage << " finished at epoch " << result.epoch
            << "; checkpoint: " << ckpt_path << "\n";
  return kExitOk;
}

int cmd_enhance(const EnhanceArgs& args) {
  auto ckpt = load_checkpoint<TrainScalar>(args.checkpoint);
  const Planes<TrainScalar> input = read_image<TrainScalar>(args.input);
  const RecursionBounds bounds = ckpt.config.bounds;

  int n = 0;
  if (args.force_n > 0) {
    n = args.force_n;
  } else if (ckpt.bp) {
    n = bp_forward(brightness_histogram(rgb_to_v(input)), *ckpt.bp, bounds).rounded;
  } else {
    throw ContractError(
        "checkpoint has no BP-Net (stage pretrain_act); pass --force-n");
  }
  const auto trace = enhance_recursive(input, ckpt.act, n, bounds.rho_max);
  write_image_png(args.output, trace.images.back());
  if (!args.trace_dir.empty()) {
    fs::create_directories(args.trace_dir);
    for (int i = 1; i <= trace.iterations; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "E_%02d.png", i);
      write_image_png(fs::path(args.trace_dir) / name, trace.images[i]);
    }
  }
  std::cout << "iterations: " << n
            << "  input_mean: " << mean_brightness(input)
            << "  output_mean: " << mean_brightness(trace.images.back()) << "\n";
  return kExitOk;
}

int cmd_evaluate(const EvaluateArgs& args) {
  const auto metric_names = split_csv(args.metrics);
  validate_metric_names(metric_names);

  std::ifstream is(args.pairs);
  if (!is) throw InputError("cannot read pair list: " + args.pairs);
  std::vector<std::pair<Planes<double>, Planes<double>>> pairs;
  std::vector<std::pair<std::string, std::string>> pair_paths;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string a, b;
    if (!(ls >> a >> b))
      throw InputError("pair list: need two paths per line, got: " + line);
    pairs.emplace_back(read_image<double>(a), read_image<double>(b));
    pair_paths.emplace_back(a, b);
  }

  const MetricReport report = evaluate_pairset(pairs, metric_names);
  {
    std::ofstream table(args.report_out);
    if (!table) throw InputError("cannot write report: " + args.report_out);
    report.write_table(table);
  }
  {
    json j;
    j["image_count"] = report.image_count;
    j["metrics"] = report.metrics;
    j["unavailable"] = unavailable_metrics();
    for (std::size_t m = 0; m < report.metrics.size(); ++m) {
      const double v = report.aggregate[m];
      j["aggregate"][report.metrics[m]] =
          std::isfinite(v) ? json(v) : json(std::isinf(v) ? "inf" : "nan");
    }
    for (int i = 0; i < report.image_count; ++i) {
      json row;
      row["reference"] = pair_paths[i].first;
      row["enhanced"] = pair_paths[i].second;
      for (std::size_t m = 0; m < report.metrics.size(); ++m) {
        const double v = report.per_image[i][m];
        row[report.metrics[m]] =
            std::isfinite(v) ? json(v) : json(std::isinf(v) ? "inf" : "nan");
      }
      j["per_image"].push_back(row);
    }
    std::ofstream js(args.report_out + ".json");
    js << j.dump(2) << "\n";
  }
  std::cout << "images: " << report.image_count << "\n";
  for (std::size_t m = 0; m < report.metrics.size(); ++m)
    std::cout << report.metrics[m] << ": " << report.aggregate[m] << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"recursive low-light image enhancement"};
  app.require_subcommand(1);

  PrepareArgs prep;
  auto* prepare = app.add_subcommand("prepare", "scan images into a manifest");
  prepare->add_option("--input-dir", prep.input_dir, "image directory")->required();
  prepare->add_option("--manifest-out", prep.manifest_out, "manifest path")
      ->required();
  prepare->add_option("--synthetic-from", prep.synthetic_from,
                      "darken well-exposed base images from this directory into "
                      "all four levels first");
  prepare->add_option("--split-fraction", prep.split_fraction,
                      "held-out test fraction");
  prepare->add_option("--seed", prep.seed, "split hash seed");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "run one training stage");
  train_cmd->add_option("--stage", train.stage, "act | bp | joint")
      ->required()
      ->check(CLI::IsMember({"act", "bp", "joint"}));
  train_cmd->add_option("--manifest", train.manifest, "dataset manifest")
      ->required();
  train_cmd->add_option("--out", train.out, "run directory for checkpoints/logs")
      ->required();
  train_cmd->add_option("--config", train.config_path,
                        "config file (default: $LLE_CONFIG)");
  train_cmd->add_flag("--resume", train.resume, "continue this stage's checkpoint");
  add_config_flag(train_cmd, train, "--learning-rate", "learning_rate", "Adam rate");
  add_config_flag(train_cmd, train, "--batch-size", "batch_size", "batch size");
  add_config_flag(train_cmd, train, "--patch-size", "patch_size", "training patch");
  add_config_flag(train_cmd, train, "--epochs", "epochs", "epoch budget");
  add_config_flag(train_cmd, train, "--epochs-act", "epochs_act",
                  "stage (a) epoch override");
  add_config_flag(train_cmd, train, "--epochs-bp", "epochs_bp",
                  "stage (b) epoch override");
  add_config_flag(train_cmd, train, "--epochs-joint", "epochs_joint",
                  "stage (c) epoch override");
  add_config_flag(train_cmd, train, "--rho-min", "rho_min", "min recursion count");
  add_config_flag(train_cmd, train, "--rho-max", "rho_max", "max recursion count");
  add_config_flag(train_cmd, train, "--w-exp", "w_exp", "exposure loss weight");
  add_config_flag(train_cmd, train, "--w-col", "w_col", "color loss weight");
  add_config_flag(train_cmd, train, "--w-tv", "w_tv", "smoothness loss weight");
  add_config_flag(train_cmd, train, "--w-p", "w_p", "perception loss weight");
  add_config_flag(train_cmd, train, "--exposure-target", "exposure_target",
                  "well-exposedness level E");
  add_config_flag(train_cmd, train, "--exposure-patch", "exposure_patch",
                  "exposure loss patch size");
  add_config_flag(train_cmd, train, "--exposure-channel", "exposure_channel",
                  "patch brightness: rgb_mean | v");
  add_config_flag(train_cmd, train, "--pseudo-threshold", "pseudo_threshold",
                  "pseudo-label brightness threshold");
  add_config_flag(train_cmd, train, "--clip-norm", "clip_norm",
                  "global gradient norm cap");
  add_config_flag(train_cmd, train, "--seed", "seed", "RNG seed");
  add_config_flag(train_cmd, train, "--deterministic", "deterministic",
                  "true|false; false draws a fresh seed");
  add_config_flag(train_cmd, train, "--threads", "threads",
                  "worker threads (0 = hardware)");
  add_config_flag(train_cmd, train, "--split-fraction", "split_fraction",
                  "held-out fraction (prepare-time setting, kept in config)");

  EnhanceArgs enh;
  auto* enhance = app.add_subcommand("enhance", "enhance one image");
  enhance->add_option("--checkpoint", enh.checkpoint, "checkpoint directory")
      ->required();
  enhance->add_option("--input", enh.input, "input image (PNG/JPEG)")->required();
  enhance->add_option("--output", enh.output, "output PNG")->required();
  enhance->add_option("--trace-dir", enh.trace_dir,
                      "write intermediate E_1..E_N images here");
  enhance->add_option("--force-n", enh.force_n,
                      "fixed iteration count instead of the BP-Net choice");

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "score image pairs");
  evaluate->add_option("--pairs", ev.pairs,
                       "text file: one 'reference enhanced' pair per line")
      ->required();
  evaluate->add_option("--metrics", ev.metrics, "comma list: psnr,ssim,eme,loe");
  evaluate->add_option("--report-out", ev.report_out, "report path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (prepare->parsed()) return cmd_prepare(prep);
    if (train_cmd->parsed()) return cmd_train(train);
    if (enhance->parsed()) return cmd_enhance(enh);
    return cmd_evaluate(ev);
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitContract;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
