#include "fishdreamer/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fishdreamer/errors.hpp"

namespace fd {

Sample make_sample(const Image& rgb, const Image& label, const Image& mask) {
  if (rgb.channels != 3 || label.channels != 1 || mask.channels != 1 || !rgb.same_size(label) ||
      !rgb.same_size(mask)) {
    throw DimensionError("sample: image, label and mask must share dimensions");
  }
  const std::size_t h = rgb.height;
  const std::size_t w = rgb.width;
  Sample s{Tensor({h, w, 3}), Tensor({h, w, 1}), Tensor({h, w, 3}), std::vector<std::int32_t>(h * w)};
  auto in = s.input.mutable_data();
  auto fov = s.fov.mutable_data();
  auto target = s.target.mutable_data();
  for (std::size_t p = 0; p < h * w; ++p) {
    const float keep = mask.pixels[p] ? 1.0f : 0.0f;
    fov[p] = keep;
    for (std::size_t c = 0; c < 3; ++c) {
      const float v = rgb.pixels[p * 3 + c] / 255.0f;
      target[p * 3 + c] = v;
      in[p * 3 + c] = v * keep;
    }
    s.labels[p] = label.pixels[p];
  }
  return s;
}

Image to_image(const Tensor& t) {
  if (t.rank() != 3) throw DimensionError("to_image: expected [H, W, C], got " + shape_str(t.shape()));
  Image img(t.dim(1), t.dim(0), t.dim(2));
  auto v = t.data();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const float s = std::clamp(v[i] * 255.0f, 0.0f, 255.0f);
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(s));
  }
  return img;
}

Image argmax_labels(const Tensor& logits) {
  const std::size_t h = logits.dim(0), w = logits.dim(1), k = logits.dim(2);
  Image img(w, h, 1);
  auto v = logits.data();
  for (std::size_t p = 0; p < h * w; ++p) {
    const float* row = v.data() + p * k;
    img.pixels[p] = static_cast<std::uint8_t>(std::max_element(row, row + k) - row);
  }
  return img;
}

AdamW::AdamW(const ModelWeights& w, AdamWOptions opt) : opt_(opt) {
  for (const auto& [name, t] : w.entries()) {
    m_.emplace_back(t.numel(), 0.0f);
    v_.emplace_back(t.numel(), 0.0f);
  }
}

void AdamW::step(ModelWeights& w, float lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(static_cast<double>(opt_.beta1), static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(static_cast<double>(opt_.beta2), static_cast<double>(t_));
  auto& entries = w.entries();
  for (std::size_t k = 0; k < entries.size(); ++k) {
    Tensor& t = entries[k].second;
    if (!t.has_grad()) continue;
    auto p = t.mutable_data();
    auto g = t.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    const float decay = t.rank() == 2 ? opt_.weight_decay : 0.0f;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = opt_.beta1 * m[i] + (1.0f - opt_.beta1) * g[i];
      v[i] = opt_.beta2 * v[i] + (1.0f - opt_.beta2) * g[i] * g[i];
      const double mh = m[i] / bc1;
      const double vh = v[i] / bc2;
      p[i] -= static_cast<float>(lr * (mh / (std::sqrt(vh) + opt_.eps) + decay * p[i]));
    }
    t.zero_grad();
  }
}

double dataset_loss(const Dreamer& model, const ModelWeights& w, const std::vector<Sample>& data,
                    std::int32_t ignore_index) {
  NoGradScope ng;
  double total = 0.0;
  for (const auto& s : data) {
    const auto out = model.forward(s.input, s.fov, w);
    total += dreamer_loss(out, s.target, s.labels, ignore_index).total.item();
  }
  return data.empty() ? 0.0 : total / static_cast<double>(data.size());
}

float scheduled_lr(const TrainOptions& opt, std::size_t step) {
  if (!opt.cosine || opt.steps == 0) return opt.adam.lr;
  const double progress = static_cast<double>(step) / static_cast<double>(opt.steps);
  return static_cast<float>(0.5 * opt.adam.lr * (1.0 + std::cos(M_PI * progress)));
}

TrainResult train_toy(const std::vector<Sample>& data, const DreamerConfig& cfg,
                      const TrainOptions& opt, ModelWeights initial) {
  if (data.empty()) throw ContractError("train: dataset is empty");
  if (opt.batch_size == 0) throw ContractError("train: batch_size must be positive");
  const Dreamer model(cfg);
  TrainResult result{initial.size() ? std::move(initial) : init_weights(cfg), {}};
  validate_weights(cfg, result.weights);
  for (auto& [name, t] : result.weights.entries()) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  AdamW adam(result.weights, opt.adam);

  std::mt19937_64 rng(opt.seed);
  std::vector<std::size_t> order(data.size());
  std::size_t cursor = order.size();
  const std::size_t batch = std::min(opt.batch_size, data.size());
  for (std::size_t step = 0; step < opt.steps; ++step) {
    double loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const Sample& s = data[order[cursor++]];
      Tape tape;
      GradScope scope(tape);
      const auto out = model.forward(s.input, s.fov, result.weights);
      const Tensor l = dreamer_loss(out, s.target, s.labels, opt.ignore_index).total;
      const double value = l.item();
      if (!std::isfinite(value)) throw NumericAbort("train: non-finite loss", step);
      loss += value;
      tape.backward(ops::scale(l, 1.0f / static_cast<float>(batch)));
    }
    loss /= static_cast<double>(batch);
    result.loss_curve.push_back(loss);
    if (opt.on_step) opt.on_step(step, loss);
    adam.step(result.weights, scheduled_lr(opt, step));
  }
  for (auto& [name, t] : result.weights.entries()) t.set_requires_grad(false);
  return result;
}

}  // namespace fd
