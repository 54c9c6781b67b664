#include "degsr/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

namespace degsr {

namespace {

std::atomic<std::uint64_t> g_next_id{1};
thread_local Tape* g_tape = nullptr;

std::shared_ptr<TensorImpl> make_impl(Shape shape, bool requires_grad) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw ShapeError("negative tensor dimension in " + shape.str());
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape;
  impl->data.assign(shape.numel(), 0.0f);
  impl->requires_grad = requires_grad;
  impl->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return impl;
}

}  // namespace

std::string Shape::str() const {
  std::ostringstream os;
  os << n << "x" << c << "x" << h << "x" << w;
  return os.str();
}

void TensorImpl::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
}

TensorImpl& Tensor::impl() const {
  if (!impl_) throw std::logic_error("use of an undefined tensor");
  return *impl_;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return Tensor(make_impl(shape, requires_grad)); }

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  Tensor t = zeros(shape, requires_grad);
  std::fill(t.impl().data.begin(), t.impl().data.end(), value);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<float> values, bool requires_grad) {
  if (values.size() != shape.numel()) {
    throw ShapeError("tensor " + shape.str() + " needs " + std::to_string(shape.numel()) +
                     " values, got " + std::to_string(values.size()));
  }
  Tensor t = zeros(shape, requires_grad);
  t.impl().data = std::move(values);
  return t;
}

Tensor Tensor::scalar(float value, bool requires_grad) { return full({1, 1, 1, 1}, value, requires_grad); }

float& Tensor::at(int n, int c, int h, int w) {
  const Shape& s = impl().shape;
  return impl().data[((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w];
}

float Tensor::at(int n, int c, int h, int w) const {
  const Shape& s = impl().shape;
  return impl().data[((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w];
}

float Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on a tensor of shape " + shape().str());
  return impl().data[0];
}

void Tensor::zero_grad() {
  impl().ensure_grad();
  std::fill(impl().grad.begin(), impl().grad.end(), 0.0f);
}

Tensor Tensor::clone() const {
  Tensor t = zeros(shape(), false);
  t.impl().data = impl().data;
  return t;
}

bool Tape::consumes(const Tensor& t) const {
  const TensorImpl* target = t.impl_ptr().get();
  for (const Node& node : nodes_) {
    for (const auto& in : node.inputs) {
      if (in.get() == target) return true;
    }
  }
  return false;
}

std::size_t Tape::count(std::string_view op) const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [op](const Node& n) { return n.op == op; }));
}

TapeScope::TapeScope(Tape& tape) : previous_(g_tape) { g_tape = &tape; }
TapeScope::~TapeScope() { g_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_tape) { g_tape = nullptr; }
NoGradScope::~NoGradScope() { g_tape = previous_; }

Tape* active_tape() { return g_tape; }

void backward(const Tensor& loss, Tape& tape, GradMode mode) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward needs a scalar loss, got " +
                     (loss.defined() ? loss.shape().str() : std::string("undefined")));
  }
  const auto& nodes = tape.nodes();
  std::unordered_set<const TensorImpl*> produced;
  produced.reserve(nodes.size());
  for (const auto& node : nodes) produced.insert(node.output.get());

  for (const auto& node : nodes) {
    node.output->ensure_grad();
    std::fill(node.output->grad.begin(), node.output->grad.end(), 0.0f);
    for (const auto& in : node.inputs) {
      if (!in->requires_grad || produced.count(in.get()) != 0) continue;
      if (mode == GradMode::reset) {
        in->grad.assign(in->data.size(), 0.0f);
      } else {
        in->ensure_grad();
      }
    }
  }

  TensorImpl* root = loss.impl_ptr().get();
  if (!root->requires_grad) return;
  if (produced.count(root) == 0 && mode == GradMode::reset) {
    root->grad.assign(1, 0.0f);
  }
  root->ensure_grad();
  root->grad[0] += 1.0f;

  std::unordered_set<const TensorImpl*> live{root};
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    if (live.count(it->output.get()) == 0) continue;
    it->backward();
    for (const auto& in : it->inputs) {
      if (in->requires_grad) live.insert(in.get());
    }
  }
}

namespace detail {

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (g_tape == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

Tensor make_output(Shape shape, bool requires_grad) { return Tensor::zeros(shape, requires_grad); }

void record(std::string_view op, std::initializer_list<const Tensor*> inputs, const Tensor& output,
            std::function<void()> backward_fn) {
  Tape::Node node;
  node.op = op;
  for (const Tensor* t : inputs) {
    if (t != nullptr && t->defined()) node.inputs.push_back(t->impl_ptr());
  }
  node.output = output.impl_ptr();
  node.backward = std::move(backward_fn);
  g_tape->record(std::move(node));
}

}  // namespace detail

}  // namespace degsr
