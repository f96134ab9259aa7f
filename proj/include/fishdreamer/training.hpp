#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "fishdreamer/geometry.hpp"
#include "fishdreamer/image.hpp"
#include "fishdreamer/model.hpp"

namespace fd {

/// One training example in model units.
struct Sample {
  Tensor input;   // [H, W, 3] in [0, 1], zero outside the FoV
  Tensor fov;     // [H, W, 1], 1 inside the FoV
  Tensor target;  // [H, W, 3] in [0, 1], full frame
  std::vector<std::int32_t> labels;  // H * W class ids
};

/// rgb: 3 channels; label: 1 channel; mask: 1 channel, nonzero inside the FoV.
Sample make_sample(const Image& rgb, const Image& label, const Image& mask);

/// [H, W, C] tensor in [0, 1] scaled to 8 bits with clamping and rounding.
Image to_image(const Tensor& t);
/// Per-pixel argmax over the trailing axis of [H, W, K] logits.
Image argmax_labels(const Tensor& logits);

struct AdamWOptions {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 1e-2f;  // applied to matrices only
};

/// Decoupled weight decay Adam over every tensor of a ModelWeights.
class AdamW {
 public:
  AdamW(const ModelWeights& w, AdamWOptions opt);
  /// Consumes the accumulated gradients and clears them.
  void step(ModelWeights& w, float lr);
  std::size_t steps() const { return t_; }

 private:
  AdamWOptions opt_;
  std::vector<std::vector<float>> m_, v_;
  std::size_t t_ = 0;
};

struct TrainOptions {
  std::size_t steps = 500;
  std::size_t batch_size = 4;
  AdamWOptions adam;
  /// Cosine decay from adam.lr to zero over `steps`; constant otherwise.
  bool cosine = true;
  std::uint64_t seed = 0;
  std::int32_t ignore_index = -1;
  std::function<void(std::size_t step, double loss)> on_step;
};

struct TrainResult {
  ModelWeights weights;
  std::vector<double> loss_curve;  // mean minibatch loss before each update
};

/// Minibatches are drawn from a seeded per-epoch shuffle. Throws NumericAbort
/// with the step index when the loss stops being finite.
TrainResult train_toy(const std::vector<Sample>& data, const DreamerConfig& cfg,
                      const TrainOptions& opt, ModelWeights initial = {});

float scheduled_lr(const TrainOptions& opt, std::size_t step);

/// Mean loss over a dataset, no gradients.
double dataset_loss(const Dreamer& model, const ModelWeights& w, const std::vector<Sample>& data,
                    std::int32_t ignore_index = -1);

}  // namespace fd
