#ifndef RELIGHT_CONFIG_HPP
#define RELIGHT_CONFIG_HPP

#include <cstdint>
#include <map>
#include <sstream>
#include <string>

#include "relight/bpnet.hpp"
#include "relight/losses.hpp"
#include "relight/types.hpp"

namespace relight {

/// Training hyperparameters. Defaults are the published operating point:
/// Adam at 1e-4, batch 8, 512x512 patches, 200 epochs, rho in [1,10],
/// loss weights (1, 0.5, 200, 0.001), exposure target 0.6 on 16x16 patches.
/// Desk-scale runs override via config file or flags.
struct TrainingConfig {
  double learning_rate = 1e-4;
  int batch_size = 8;
  int patch_size = 512;
  int epochs = 200;
  // Per-stage overrides; 0 means "use epochs".
  int epochs_act = 0;
  int epochs_bp = 0;
  int epochs_joint = 0;
  RecursionBounds bounds;
  LossWeights weights;
  ExposureTarget exposure;
  ExposureChannel exposure_channel = ExposureChannel::kRgbMean;
  double pseudo_threshold = 0.6;
  double clip_norm = 5.0;
  std::uint64_t seed = 1234;
  bool deterministic = true;
  int threads = 0;  // 0 = hardware concurrency
  double split_fraction = 0.25;

  int stage_epochs(int per_stage) const { return per_stage > 0 ? per_stage : epochs; }

  void validate() const {
    if (learning_rate <= 0) throw ContractError("config: learning_rate must be > 0");
    if (batch_size < 1) throw ContractError("config: batch_size must be >= 1");
    if (patch_size < 8 || patch_size % 4)
      throw ContractError("config: patch_size must be >= 8 and divisible by 4");
    if (epochs < 1) throw ContractError("config: epochs must be >= 1");
    if (pseudo_threshold <= 0 || pseudo_threshold > 1)
      throw ContractError("config: pseudo_threshold must be in (0,1]");
    if (split_fraction < 0 || split_fraction >= 1)
      throw ContractError("config: split_fraction must be in [0,1)");
    bounds.validate();
    weights.validate();
    exposure.validate();
  }
};

using KeyValues = std::map<std::string, std::string>;

namespace detail {

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline double parse_double(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InputError("config: bad numeric value for '" + key + "': " + s);
  }
}

inline long parse_long(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InputError("config: bad integer value for '" + key + "': " + s);
  }
}

inline bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw InputError("config: bad boolean value for '" + key + "': " + s);
}

}  // namespace detail

inline KeyValues config_to_key_values(const TrainingConfig& c) {
  KeyValues kv;
  kv["learning_rate"] = detail::format_double(c.learning_rate);
  kv["batch_size"] = std::to_string(c.batch_size);
  kv["patch_size"] = std::to_string(c.patch_size);
  kv["epochs"] = std::to_string(c.epochs);
  kv["epochs_act"] = std::to_string(c.epochs_act);
  kv["epochs_bp"] = std::to_string(c.epochs_bp);
  kv["epochs_joint"] = std::to_string(c.epochs_joint);
  kv["rho_min"] = std::to_string(c.bounds.rho_min);
  kv["rho_max"] = std::to_string(c.bounds.rho_max);
  kv["w_exp"] = detail::format_double(c.weights.w_exp);
  kv["w_col"] = detail::format_double(c.weights.w_col);
  kv["w_tv"] = detail::format_double(c.weights.w_tv);
  kv["w_p"] = detail::format_double(c.weights.w_p);
  kv["exposure_target"] = detail::format_double(c.exposure.level);
  kv["exposure_patch"] = std::to_string(c.exposure.patch);
  kv["exposure_channel"] =
      c.exposure_channel == ExposureChannel::kVChannel ? "v" : "rgb_mean";
  kv["pseudo_threshold"] = detail::format_double(c.pseudo_threshold);
  kv["clip_norm"] = detail::format_double(c.clip_norm);
  kv["seed"] = std::to_string(c.seed);
  kv["deterministic"] = c.deterministic ? "true" : "false";
  kv["threads"] = std::to_string(c.threads);
  kv["split_fraction"] = detail::format_double(c.split_fraction);
  return kv;
}

inline void apply_key_value(TrainingConfig& c, const std::string& key,
                            const std::string& value) {
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_long;
  if (key == "learning_rate") c.learning_rate = parse_double(value, key);
  else if (key == "batch_size") c.batch_size = static_cast<int>(parse_long(value, key));
  else if (key == "patch_size") c.patch_size = static_cast<int>(parse_long(value, key));
  else if (key == "epochs") c.epochs = static_cast<int>(parse_long(value, key));
  else if (key == "epochs_act") c.epochs_act = static_cast<int>(parse_long(value, key));
  else if (key == "epochs_bp") c.epochs_bp = static_cast<int>(parse_long(value, key));
  else if (key == "epochs_joint") c.epochs_joint = static_cast<int>(parse_long(value, key));
  else if (key == "rho_min") c.bounds.rho_min = static_cast<int>(parse_long(value, key));
  else if (key == "rho_max") c.bounds.rho_max = static_cast<int>(parse_long(value, key));
  else if (key == "w_exp") c.weights.w_exp = parse_double(value, key);
  else if (key == "w_col") c.weights.w_col = parse_double(value, key);
  else if (key == "w_tv") c.weights.w_tv = parse_double(value, key);
  else if (key == "w_p") c.weights.w_p = parse_double(value, key);
  else if (key == "exposure_target") c.exposure.level = parse_double(value, key);
  else if (key == "exposure_patch") c.exposure.patch = static_cast<int>(parse_long(value, key));
  else if (key == "exposure_channel") {
    if (value == "v") c.exposure_channel = ExposureChannel::kVChannel;
    else if (value == "rgb_mean") c.exposure_channel = ExposureChannel::kRgbMean;
    else throw InputError("config: exposure_channel must be 'v' or 'rgb_mean'");
  }
  else if (key == "pseudo_threshold") c.pseudo_threshold = parse_double(value, key);
  else if (key == "clip_norm") c.clip_norm = parse_double(value, key);
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_long(value, key));
  else if (key == "deterministic") c.deterministic = parse_bool(value, key);
  else if (key == "threads") c.threads = static_cast<int>(parse_long(value, key));
  else if (key == "split_fraction") c.split_fraction = parse_double(value, key);
  else throw InputError("config: unknown key '" + key + "'");
}

/// Flat `key=value` text, one per line; '#' starts a comment.
inline TrainingConfig parse_config_text(std::istream& in,
                                        TrainingConfig base = {}) {
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InputError("config: line " + std::to_string(line_no) +
                       " is not key=value: " + line);
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    const auto vfirst = value.find_first_not_of(" \t");
    value = vfirst == std::string::npos ? "" : value.substr(vfirst);
    apply_key_value(base, key, value);
  }
  return base;
}

inline void write_config_text(std::ostream& os, const TrainingConfig& c) {
  for (const auto& [k, v] : config_to_key_values(c)) os << k << "=" << v << "\n";
}

}  // namespace relight

#endif  // RELIGHT_CONFIG_HPP
