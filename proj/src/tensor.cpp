#include "fishdreamer/tensor.hpp"

#include <atomic>
#include <sstream>

#include "fishdreamer/errors.hpp"

namespace fd {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace detail

namespace {

std::shared_ptr<detail::Node> make_node(Shape shape, std::vector<float> values) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->id = detail::next_node_id();
  node->shape = std::move(shape);
  node->data = std::make_shared<std::vector<float>>(std::move(values));
  return node;
}

thread_local Tape* g_active_tape = nullptr;

}  // namespace

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, float fill)
    : node_(make_node(shape, std::vector<float>(shape_numel(shape), fill))) {}

Tensor::Tensor(Shape shape, std::vector<float> values)
    : node_(make_node(std::move(shape), std::move(values))) {}

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw DimensionError("axis out of range for " + shape_str(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const float> Tensor::data() const {
  if (!node_) throw ContractError("use of undefined tensor");
  return {node_->data->data(), node_->data->size()};
}

std::span<float> Tensor::mutable_data() {
  if (!node_) throw ContractError("use of undefined tensor");
  return {node_->data->data(), node_->data->size()};
}

float Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return data()[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  if (!node_) throw ContractError("use of undefined tensor");
  node_->requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const float> Tensor::grad() const {
  if (!has_grad()) throw ContractError("tensor has no gradient");
  return {node_->grad.data(), node_->grad.size()};
}

std::span<float> Tensor::mutable_grad() {
  auto& g = node_->grad_buffer();
  return {g.data(), g.size()};
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::detach() const {
  return Tensor(shape(), std::vector<float>(data().begin(), data().end()));
}

std::uint64_t Tensor::id() const { return node_ ? node_->id : 0; }

void Tape::record(const std::vector<const Tensor*>& inputs, const Tensor& output,
                  BackwardFn fn) {
  Entry e;
  e.input_ids.reserve(inputs.size());
  for (const auto* t : inputs) {
    if (t->id() >= output.id()) throw ContractError("tape entry out of topological order");
    e.input_ids.push_back(t->id());
  }
  e.output = output.node();
  e.output->requires_grad = true;
  e.backward = std::move(fn);
  entries_.push_back(std::move(e));
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward needs a scalar loss, got " + shape_str(loss.shape()));
  }
  auto& seed = loss.node()->grad_buffer();
  seed[0] += 1.0f;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    const auto& g = it->output->grad;
    if (g.empty()) continue;
    it->backward({g.data(), g.size()});
  }
}

GradScope::GradScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
GradScope::~GradScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (!g_active_tape) return false;
  for (const auto* t : inputs) {
    if (t && t->requires_grad()) return true;
  }
  return false;
}

}  // namespace fd
