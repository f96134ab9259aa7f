#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "fishdreamer/model.hpp"

namespace fd {

/// Flat `key = value` file. '#' starts a comment, [section] lines are
/// ignored, values may be quoted and lists are written [a, b, c].
class KeyValues {
 public:
  static KeyValues parse(std::string_view text, const std::string& source = "config");
  static KeyValues load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string str(const std::string& key) const;
  double number(const std::string& key) const;
  std::int64_t integer(const std::string& key) const;
  std::vector<std::int64_t> integers(const std::string& key) const;
  /// Throws ContractError naming the first key outside `allowed`.
  void require_known(const std::set<std::string>& allowed) const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::string source_;
  std::map<std::string, std::string> values_;
};

/// Everything the command-line tool reads from its configuration file.
struct AppConfig {
  std::array<double, 4> k{0, 0, 0, 0};
  std::optional<double> center_x, center_y, norm_radius;
  double fov_radius = 0.0;
  std::optional<std::size_t> out_width, out_height;
  std::int32_t ignore_index = 255;
  std::string dataset = "dataset";
  DreamerConfig model;
  std::size_t batch_size = 4;
  std::size_t steps = 500;
  float lr = 2e-3f;
};

/// Keys: k1..k4 and fov_radius are required; center_x, center_y,
/// norm_radius, out_width, out_height, num_classes, ignore_index, n_mask,
/// pca_direction, window, patch, widths, depths, heads, decoder_width, seed,
/// batch_size, steps, lr and dataset are optional.
AppConfig parse_app_config(const KeyValues& kv);
AppConfig load_app_config(const std::filesystem::path& path);

/// Model configuration for a frame size; the FoV radius comes along.
DreamerConfig model_config(const AppConfig& app, std::size_t width, std::size_t height);

/// FNV-1a 64 over the canonical text of the distortion and mask settings.
std::uint64_t distortion_hash(const AppConfig& app);
std::string hex64(std::uint64_t v);

}  // namespace fd
