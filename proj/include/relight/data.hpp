#ifndef RELIGHT_DATA_HPP
#define RELIGHT_DATA_HPP

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "relight/imgstats.hpp"
#include "relight/types.hpp"

namespace relight {

// ---------------------------------------------------------------------------
// Brightness-level buckets over mean V-channel brightness:
//   Level_1 [0, 0.15)   Level_2 [0.15, 0.3)   Level_3 [0.3, 0.45)
//   Level_4 [0.45, 0.6]
// Anything brighter than 0.6 is rejected outright; the framework assumes
// low-light input and bright images would corrupt the pseudo-labels.
// ---------------------------------------------------------------------------

enum class Level { kLevel1 = 1, kLevel2 = 2, kLevel3 = 3, kLevel4 = 4 };

struct LevelRange {
  double lo, hi;  // [lo, hi); Level_4 additionally includes 0.6 itself
};

inline LevelRange level_range(Level level) {
  switch (level) {
    case Level::kLevel1: return {0.0, 0.15};
    case Level::kLevel2: return {0.15, 0.3};
    case Level::kLevel3: return {0.3, 0.45};
    case Level::kLevel4: return {0.45, 0.6};
  }
  throw ContractError("unknown level");
}

inline std::optional<Level> bucket_of(double mean) {
  if (mean < 0.0) return std::nullopt;
  if (mean < 0.15) return Level::kLevel1;
  if (mean < 0.3) return Level::kLevel2;
  if (mean < 0.45) return Level::kLevel3;
  if (mean <= 0.6) return Level::kLevel4;
  return std::nullopt;
}

inline std::string to_string(Level level) {
  return "Level_" + std::to_string(static_cast<int>(level));
}

inline Level level_from_string(const std::string& s) {
  for (Level l : {Level::kLevel1, Level::kLevel2, Level::kLevel3, Level::kLevel4})
    if (s == to_string(l)) return l;
  throw InputError("unknown level: " + s);
}

enum class Split { kTrain, kTest };

struct SampleRecord {
  std::string path;
  double mean_brightness = 0;
  Level level = Level::kLevel1;
  Split split = Split::kTrain;
};

struct DatasetManifest {
  std::vector<SampleRecord> records;

  int count(Level level) const {
    return static_cast<int>(std::count_if(
        records.begin(), records.end(),
        [&](const SampleRecord& r) { return r.level == level; }));
  }

  std::vector<const SampleRecord*> select(const std::vector<Level>& levels,
                                          Split split) const {
    std::vector<const SampleRecord*> out;
    for (const auto& r : records) {
      if (r.split != split) continue;
      if (std::find(levels.begin(), levels.end(), r.level) != levels.end())
        out.push_back(&r);
    }
    return out;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) throw InputError("cannot write manifest: " + path.string());
    os << "# relight manifest v1: path<TAB>mean_brightness<TAB>level<TAB>split\n";
    os.precision(17);
    for (const auto& r : records)
      os << r.path << '\t' << r.mean_brightness << '\t' << to_string(r.level)
         << '\t' << (r.split == Split::kTrain ? "train" : "test") << '\n';
    if (!os) throw InputError("failed writing manifest: " + path.string());
  }

  static DatasetManifest load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw InputError("cannot read manifest: " + path.string());
    DatasetManifest m;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      if (line.empty() || line[0] == '#') continue;
      SampleRecord r;
      std::size_t a = line.find('\t');
      std::size_t b = a == std::string::npos ? a : line.find('\t', a + 1);
      std::size_t c = b == std::string::npos ? b : line.find('\t', b + 1);
      if (c == std::string::npos)
        throw InputError("manifest: malformed line " + std::to_string(line_no));
      r.path = line.substr(0, a);
      r.mean_brightness = std::stod(line.substr(a + 1, b - a - 1));
      r.level = level_from_string(line.substr(b + 1, c - b - 1));
      const std::string split = line.substr(c + 1);
      if (split == "train") r.split = Split::kTrain;
      else if (split == "test") r.split = Split::kTest;
      else throw InputError("manifest: bad split on line " + std::to_string(line_no));
      m.records.push_back(std::move(r));
    }
    return m;
  }
};

/// Decodes a file into a [0,1] RGB image, or nullopt if undecodable.
template <typename S>
using ImageLoader = std::function<std::optional<Planes<S>>(const std::string&)>;

/// Split on the seeded hash of the file name, so membership is stable under
/// re-scans and directory moves.
inline Split split_of(const std::string& path, double test_fraction,
                      std::uint64_t seed) {
  const std::string name = std::filesystem::path(path).filename().string();
  const double u = static_cast<double>(fnv1a64(name, seed) >> 11) * 0x1.0p-53;
  return u < test_fraction ? Split::kTest : Split::kTrain;
}

/// Scans a directory, buckets every decodable image by mean brightness and
/// assigns splits. Images brighter than 0.6 are rejected; undecodable files
/// are skipped. Both are reported on `warnings`.
template <typename S>
DatasetManifest scan_and_bucket(const std::filesystem::path& dir,
                                const ImageLoader<S>& loader,
                                double test_fraction, std::uint64_t seed,
                                std::ostream* warnings = nullptr) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir))
    throw InputError("not a directory: " + dir.string());
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file()) paths.push_back(entry.path().string());
  std::sort(paths.begin(), paths.end());

  DatasetManifest manifest;
  for (const auto& path : paths) {
    auto img = loader(path);
    if (!img) {
      if (warnings) *warnings << "warning: skipping unreadable file " << path << "\n";
      continue;
    }
    const double mean = static_cast<double>(mean_brightness(*img));
    const auto level = bucket_of(mean);
    if (!level) {
      if (warnings)
        *warnings << "warning: rejecting " << path << " (mean brightness "
                  << mean << " above 0.6)\n";
      continue;
    }
    manifest.records.push_back(
        {path, mean, *level, split_of(path, test_fraction, seed)});
  }
  if (manifest.records.empty())
    throw InputError("no usable images in " + dir.string());
  return manifest;
}

/// Uniformly samples records from the requested levels; crops a random
/// patch when the image is larger, otherwise pads to the next multiple of 4.
template <typename S>
std::vector<Planes<S>> sample_batch(const DatasetManifest& manifest,
                                    const std::vector<Level>& levels, int batch,
                                    int patch, Rng& rng,
                                    const ImageLoader<S>& loader,
                                    Split split = Split::kTrain) {
  const auto pool = manifest.select(levels, split);
  if (pool.empty()) throw InputError("sample_batch: no records for requested levels");
  std::vector<Planes<S>> out;
  out.reserve(batch);
  for (int i = 0; i < batch; ++i) {
    const auto* rec = pool[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1))];
    auto img = loader(rec->path);
    if (!img) throw InputError("sample_batch: cannot load " + rec->path);
    Planes<S> cropped = *img;
    if (img->height() > patch || img->width() > patch) {
      const Index ch = std::min<Index>(patch, img->height());
      const Index cw = std::min<Index>(patch, img->width());
      const Index oy = static_cast<Index>(rng.uniform_int(0, img->height() - ch));
      const Index ox = static_cast<Index>(rng.uniform_int(0, img->width() - cw));
      cropped = Planes<S>(ch, cw, img->channels());
      for (Index c = 0; c < img->channels(); ++c)
        cropped.plane(c) = img->plane(c).block(oy, ox, ch, cw);
    }
    out.push_back(pad_to_multiple(cropped, 4));
  }
  return out;
}

/// Gamma-and-gain darkening: clamp01(gain * base^gamma).
template <typename S>
Planes<S> darken(const Planes<S>& base, double gain, double gamma) {
  Planes<S> out = base;
  out.mat().array() = (S(gain) * base.mat().array().pow(S(gamma)))
                          .cwiseMax(S(0))
                          .cwiseMin(S(1));
  return out;
}

/// Desk-scale data generator: bisects the gain (fixed gamma 2) until the
/// darkened image's mean brightness lands inside the target level's range.
template <typename S>
Planes<S> synthetic_darken(const Planes<S>& base, Level target) {
  const auto range = level_range(target);
  const double base_mean = static_cast<double>(mean_brightness(base));
  if (base_mean <= range.hi)
    throw InputError("synthetic_darken: base image too dark for target level");
  const double gamma = 2.0;
  const double want_lo = range.lo + 0.2 * (range.hi - range.lo);
  const double want_hi = range.hi - 0.2 * (range.hi - range.lo);
  double lo = 0.0, hi = 4.0;
  for (int iter = 0; iter < 60; ++iter) {
    const double gain = 0.5 * (lo + hi);
    Planes<S> candidate = darken(base, gain, gamma);
    const double mean = static_cast<double>(mean_brightness(candidate));
    if (mean >= want_lo && mean <= want_hi) return candidate;
    (mean < want_lo ? lo : hi) = gain;
  }
  throw InputError("synthetic_darken: target level unreachable from this base");
}

}  // namespace relight

#endif  // RELIGHT_DATA_HPP
