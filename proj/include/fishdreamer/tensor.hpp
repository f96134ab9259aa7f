#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fd {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  std::uint64_t id = 0;
  Shape shape;
  // Shared so that contiguous reshapes can alias the buffer.
  std::shared_ptr<std::vector<float>> data;
  std::vector<float> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;

  std::vector<float>& grad_buffer() {
    if (grad.empty()) grad.assign(data->size(), 0.0f);
    return grad;
  }
};

std::uint64_t next_node_id();

}  // namespace detail

/// Dense row-major float32 array. Copies are shallow handles to the same node;
/// results of ops are never mutated afterwards.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0f); }
  static Tensor scalar(float v) { return Tensor(Shape{1}, v); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const float> data() const;
  /// Writable view. Only meant for leaves (parameters, inputs being built).
  std::span<float> mutable_data();
  float item() const;
  float at(std::size_t flat) const { return data()[flat]; }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on = true);
  bool has_grad() const;
  std::span<const float> grad() const;
  std::span<float> mutable_grad();
  void zero_grad();

  /// Same values, fresh node outside any tape.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  std::uint64_t id() const;
  const std::shared_ptr<detail::Node>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node> node);

 private:
  std::shared_ptr<detail::Node> node_;
};

using BackwardFn = std::function<void(std::span<const float> out_grad)>;

/// Recording of differentiable ops, replayed in reverse by backward().
class Tape {
 public:
  struct Entry {
    std::vector<std::uint64_t> input_ids;
    std::shared_ptr<detail::Node> output;
    BackwardFn backward;
  };

  void record(const std::vector<const Tensor*>& inputs, const Tensor& output,
              BackwardFn fn);
  /// Seeds d(loss)/d(loss) = 1 and accumulates into every reachable leaf.
  void backward(const Tensor& loss);
  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

 private:
  std::vector<Entry> entries_;
};

/// Installs a tape as the recording target for the current thread.
class GradScope {
 public:
  explicit GradScope(Tape& tape);
  ~GradScope();
  GradScope(const GradScope&) = delete;
  GradScope& operator=(const GradScope&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording for the current thread.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

/// True when an op over these inputs must be recorded.
bool should_record(std::initializer_list<const Tensor*> inputs);

}  // namespace fd
