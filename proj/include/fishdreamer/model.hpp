#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fishdreamer/ops.hpp"
#include "fishdreamer/polar_attention.hpp"
#include "fishdreamer/tensor.hpp"

namespace fd {

struct DreamerConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t patch = 4;
  std::array<std::size_t, 4> widths{16, 32, 64, 128};
  std::array<std::size_t, 4> depths{2, 2, 2, 2};
  std::array<std::size_t, 4> heads{1, 2, 4, 8};
  std::size_t window = 4;
  std::size_t num_classes = 4;
  std::size_t n_mask = 2;
  PcaDirection direction = PcaDirection::Bi;
  std::size_t decoder_width = 16;
  /// FoV radius in input pixels; sets the outer ring radius when pca_radius is 0.
  double fov_radius = 24.0;
  /// Outer ring radius in deepest-grid tokens; 0 derives it from fov_radius.
  double pca_radius = 0.0;
  std::uint64_t seed = 0;

  /// Throws ContractError describing the first violated constraint.
  void validate() const;
  std::size_t grid_height(std::size_t stage) const;  // stage in [0, 4)
  std::size_t grid_width(std::size_t stage) const;
  double ring_radius() const;
};

/// Named parameters in a fixed order.
class ModelWeights {
 public:
  void add(std::string name, Tensor t);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  void set(const std::string& name, Tensor t);
  std::size_t size() const { return entries_.size(); }
  std::size_t parameter_count() const;
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class Init { TruncNormal, Zeros, Ones, Identity };

struct ParamSpec {
  std::string name;
  Shape shape;
  Init init;
};

/// Every parameter the configuration needs, in storage order.
std::vector<ParamSpec> weight_layout(const DreamerConfig& cfg);
/// Seeded from cfg.seed.
ModelWeights init_weights(const DreamerConfig& cfg);
/// Throws StructuralError naming missing, unexpected and mis-shaped tensors.
void validate_weights(const DreamerConfig& cfg, const ModelWeights& w);

struct ForwardOutput {
  Tensor rgb;     // [H, W, 3]
  Tensor logits;  // [H, W, K]
};

class ModelPlan;

/// Precomputed index tables for one configuration.
class Dreamer {
 public:
  explicit Dreamer(DreamerConfig cfg);
  ~Dreamer();
  Dreamer(Dreamer&&) noexcept;
  Dreamer& operator=(Dreamer&&) noexcept;

  const DreamerConfig& config() const { return cfg_; }
  /// x: [H, W, 3], zero outside the FoV; fov: [H, W, 1] with 1 inside.
  ForwardOutput forward(const Tensor& x, const Tensor& fov, const ModelWeights& w) const;

 private:
  DreamerConfig cfg_;
  std::unique_ptr<ModelPlan> plan_;
};

ForwardOutput forward(const Tensor& x, const Tensor& fov, const DreamerConfig& cfg,
                      const ModelWeights& w);

struct LossTerms {
  Tensor total;
  Tensor l1;
  Tensor ce;
};

/// L1 over the full frame plus cross entropy over all labeled pixels.
LossTerms dreamer_loss(const ForwardOutput& out, const Tensor& rgb_gt,
                       std::span<const std::int32_t> labels, std::int32_t ignore_index = -1);

}  // namespace fd
