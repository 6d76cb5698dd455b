#ifndef RELIGHT_CHECKPOINT_HPP
#define RELIGHT_CHECKPOINT_HPP

#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "relight/actnet.hpp"
#include "relight/bpnet.hpp"
#include "relight/config.hpp"
#include "relight/types.hpp"

namespace relight {

inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'R', 'L', 'T', 'C', 'K', 'P', 'T', '1'};

enum class TrainStage { kPretrainAct, kPretrainBp, kFinetuned };

inline std::string to_string(TrainStage s) {
  switch (s) {
    case TrainStage::kPretrainAct: return "pretrain_act";
    case TrainStage::kPretrainBp: return "pretrain_bp";
    case TrainStage::kFinetuned: return "finetuned";
  }
  throw ContractError("unknown stage");
}

inline TrainStage stage_from_string(const std::string& s) {
  if (s == "pretrain_act") return TrainStage::kPretrainAct;
  if (s == "pretrain_bp") return TrainStage::kPretrainBp;
  if (s == "finetuned") return TrainStage::kFinetuned;
  throw InputError("unknown training stage: " + s);
}

/// Serialized model state: ACT-Net always, BP-Net from stage (b) onward,
/// plus the stage marker, last finished epoch and a config snapshot.
template <typename S>
struct Checkpoint {
  ActNetParams<S> act;
  std::optional<BpNetParams<S>> bp;
  TrainStage stage = TrainStage::kPretrainAct;
  int epoch = 0;
  TrainingConfig config;
};

namespace detail {

template <typename S>
void write_tensors(std::ofstream& os, std::vector<TensorView<S>> views,
                   const std::string& prefix) {
  for (const auto& v : views) {
    const std::string name = prefix + v.name;
    const std::uint32_t len = static_cast<std::uint32_t>(name.size());
    const std::uint64_t rows = v.rows, cols = v.cols;
    os.write(reinterpret_cast<const char*>(&len), sizeof len);
    os.write(name.data(), len);
    os.write(reinterpret_cast<const char*>(&rows), sizeof rows);
    os.write(reinterpret_cast<const char*>(&cols), sizeof cols);
    os.write(reinterpret_cast<const char*>(v.data), sizeof(S) * v.size());
  }
}

template <typename S>
void read_tensors(std::ifstream& is, std::vector<TensorView<S>> views,
                  const std::string& prefix, const std::filesystem::path& file) {
  for (auto& v : views) {
    std::uint32_t len = 0;
    std::uint64_t rows = 0, cols = 0;
    is.read(reinterpret_cast<char*>(&len), sizeof len);
    if (!is || len > 4096) throw InputError("corrupt checkpoint: " + file.string());
    std::string name(len, '\0');
    is.read(name.data(), len);
    is.read(reinterpret_cast<char*>(&rows), sizeof rows);
    is.read(reinterpret_cast<char*>(&cols), sizeof cols);
    if (!is || name != prefix + v.name ||
        rows != static_cast<std::uint64_t>(v.rows) ||
        cols != static_cast<std::uint64_t>(v.cols))
      throw InputError("corrupt checkpoint (tensor '" + prefix + v.name +
                       "'): " + file.string());
    is.read(reinterpret_cast<char*>(v.data), sizeof(S) * v.size());
    if (!is) throw InputError("corrupt checkpoint (short read): " + file.string());
  }
}

}  // namespace detail

template <typename S>
void save_checkpoint(Checkpoint<S>& ckpt, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path tmp = dir.string() + ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  {
    std::ofstream meta(tmp / "meta.txt");
    meta << "format_version=" << kCheckpointFormatVersion << "\n";
    meta << "stage=" << to_string(ckpt.stage) << "\n";
    meta << "epoch=" << ckpt.epoch << "\n";
    meta << "scalar_bytes=" << sizeof(S) << "\n";
    meta << "has_bp=" << (ckpt.bp ? 1 : 0) << "\n";
    for (const auto& [k, v] : config_to_key_values(ckpt.config))
      meta << "cfg." << k << "=" << v << "\n";
  }
  {
    std::ofstream bin(tmp / "params.bin", std::ios::binary);
    bin.write(kCheckpointMagic, sizeof kCheckpointMagic);
    std::uint32_t count = static_cast<std::uint32_t>(tensors(ckpt.act).size());
    if (ckpt.bp) count += static_cast<std::uint32_t>(tensors(*ckpt.bp).size());
    bin.write(reinterpret_cast<const char*>(&count), sizeof count);
    detail::write_tensors<S>(bin, tensors(ckpt.act), "act.");
    if (ckpt.bp) detail::write_tensors<S>(bin, tensors(*ckpt.bp), "bp.");
    if (!bin) throw InputError("failed writing checkpoint: " + dir.string());
  }
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

template <typename S>
Checkpoint<S> load_checkpoint(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path meta_path = dir / "meta.txt";
  const fs::path bin_path = dir / "params.bin";
  if (!fs::exists(meta_path) || !fs::exists(bin_path))
    throw InputError("checkpoint not found: " + dir.string());

  Checkpoint<S> ckpt;
  bool has_bp = false;
  {
    std::ifstream meta(meta_path);
    std::string line;
    while (std::getline(meta, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(0, eq);
      const std::string value = line.substr(eq + 1);
      if (key == "format_version") {
        if (value != std::to_string(kCheckpointFormatVersion))
          throw InputError("checkpoint format version mismatch (got " + value +
                           ", expected " +
                           std::to_string(kCheckpointFormatVersion) + ")");
      } else if (key == "stage") {
        ckpt.stage = stage_from_string(value);
      } else if (key == "epoch") {
        ckpt.epoch = static_cast<int>(detail::parse_long(value, key));
      } else if (key == "scalar_bytes") {
        if (value != std::to_string(sizeof(S)))
          throw InputError("checkpoint scalar width mismatch");
      } else if (key == "has_bp") {
        has_bp = value == "1";
      } else if (key.rfind("cfg.", 0) == 0) {
        apply_key_value(ckpt.config, key.substr(4), value);
      }
    }
  }

  ckpt.act = ActNetParams<S>::zeros_like();
  if (has_bp) ckpt.bp = BpNetParams<S>::zeros_like();

  std::ifstream bin(bin_path, std::ios::binary);
  char magic[sizeof kCheckpointMagic];
  bin.read(magic, sizeof magic);
  if (!bin || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw InputError("corrupt checkpoint (bad magic): " + dir.string());
  std::uint32_t count = 0;
  bin.read(reinterpret_cast<char*>(&count), sizeof count);
  std::uint32_t expected = static_cast<std::uint32_t>(tensors(ckpt.act).size());
  if (ckpt.bp) expected += static_cast<std::uint32_t>(tensors(*ckpt.bp).size());
  if (!bin || count != expected)
    throw InputError("corrupt checkpoint (tensor count): " + dir.string());
  detail::read_tensors<S>(bin, tensors(ckpt.act), "act.", bin_path);
  if (ckpt.bp) detail::read_tensors<S>(bin, tensors(*ckpt.bp), "bp.", bin_path);
  return ckpt;
}

}  // namespace relight

#endif  // RELIGHT_CHECKPOINT_HPP
