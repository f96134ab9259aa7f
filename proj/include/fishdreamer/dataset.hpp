#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fishdreamer/config.hpp"
#include "fishdreamer/geometry.hpp"
#include "fishdreamer/training.hpp"

namespace fd {

inline const std::vector<std::string> kSplits{"train", "val"};

/// Paths are relative to the dataset root (the manifest's directory).
struct SampleRecord {
  std::string split;
  std::string name;
  std::string image;
  std::string label;
  std::string mask;
  std::size_t width = 0;
  std::size_t height = 0;
  bool operator==(const SampleRecord&) const = default;
};

struct Manifest {
  std::string dataset;
  std::string distortion_hash;
  std::vector<SampleRecord> samples;  // split order, then lexicographic name
  std::size_t count(const std::string& split) const;
  bool operator==(const Manifest&) const = default;
};

/// One header line followed by one line per sample.
std::string manifest_jsonl(const Manifest& m);
Manifest parse_manifest(const std::string& text);
void write_manifest(const std::filesystem::path& path, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& path);

/// Model for a source frame: the configured center and normalization, or the
/// frame center and half diagonal. Validated out to the frame corners.
DistortionModel distortion_for(const AppConfig& app, std::size_t width, std::size_t height);

struct DeriveResult {
  Manifest manifest;
  std::vector<std::string> unpaired;  // relative input paths without a partner
  std::vector<std::string> failed;    // "path: reason"
};

/// Reads images/{train,val}/*.png and labels/{train,val}/*.png under `in_root`
/// and pairs them by file name. Writes {split}/{image,label,mask}/<name>.png
/// and manifest.jsonl under `out_root`. Labels use nearest sampling and
/// ignore_index where the warp has no preimage.
DeriveResult derive(const AppConfig& app, const std::filesystem::path& in_root,
                    const std::filesystem::path& out_root);

struct ClassStats {
  std::string split;
  std::vector<std::uint64_t> pixels;  // per class
  std::uint64_t labeled = 0;
  std::uint64_t ignored = 0;
  std::vector<double> percent() const;
};

struct StatsResult {
  std::vector<ClassStats> splits;
  std::vector<std::string> errors;  // "path: reason"
};

/// Label values >= num_classes other than ignore_index are reported as errors.
StatsResult dataset_stats(const Manifest& m, const std::filesystem::path& root,
                          std::size_t num_classes, std::int32_t ignore_index);
/// split,class,pixels,percent
std::string stats_csv(const StatsResult& s);

std::vector<Sample> load_split(const Manifest& m, const std::filesystem::path& root,
                               const std::string& split);

}  // namespace fd
