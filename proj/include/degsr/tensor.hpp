#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace degsr {

// Thrown for contract violations on tensor operations (shape mismatches,
// invalid arguments). The message names the offending shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * static_cast<std::size_t>(h) * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t sample() const { return static_cast<std::size_t>(c) * h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

struct TensorImpl {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty when absent
  bool requires_grad = false;
  std::uint64_t id = 0;

  void ensure_grad();
};

// Dense NCHW float32 tensor with shared ownership. Copies of a Tensor alias
// the same storage; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<float> values, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  explicit operator bool() const { return defined(); }

  const Shape& shape() const { return impl().shape; }
  std::size_t numel() const { return impl().data.size(); }
  std::uint64_t id() const { return impl().id; }

  std::span<float> data() { return impl().data; }
  std::span<const float> data() const { return impl().data; }
  float* ptr() { return impl().data.data(); }
  const float* ptr() const { return impl().data.data(); }

  float& at(int n, int c, int h, int w);
  float at(int n, int c, int h, int w) const;
  // Value of a one-element tensor.
  float item() const;

  bool requires_grad() const { return impl().requires_grad; }
  void set_requires_grad(bool value) { impl().requires_grad = value; }

  bool has_grad() const { return !impl().grad.empty(); }
  std::span<float> grad() { return impl().grad; }
  std::span<const float> grad() const { return impl().grad; }
  void zero_grad();
  void clear_grad() { impl().grad.clear(); }

  // New tensor with copied values and no gradient history.
  Tensor clone() const;
  // Same as clone() but documents the intent of cutting the graph.
  Tensor detach() const { return clone(); }

  const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

 private:
  TensorImpl& impl() const;
  std::shared_ptr<TensorImpl> impl_;
};

// Ordered record of differentiable operations. Nodes are appended in
// execution order, which is a topological order of the graph.
class Tape {
 public:
  struct Node {
    std::string_view op;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::shared_ptr<TensorImpl> output;
    std::function<void()> backward;
  };

  void record(Node node) { nodes_.push_back(std::move(node)); }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  void clear() { nodes_.clear(); }

  // True when any recorded node consumes the given tensor.
  bool consumes(const Tensor& t) const;
  std::size_t count(std::string_view op) const;

 private:
  std::vector<Node> nodes_;
};

// Makes `tape` the recording target of the current thread for its lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Suspends recording on the current thread for its lifetime.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

// Tape that new operations record into on this thread, or nullptr.
Tape* active_tape();

enum class GradMode {
  reset,       // leaf gradients are zeroed before propagation
  accumulate,  // leaf gradients are added onto
};

// Propagates d(loss)/d(leaf) into every requires_grad leaf reachable through
// `tape`. The loss must hold exactly one element.
void backward(const Tensor& loss, Tape& tape, GradMode mode = GradMode::reset);

namespace detail {

// True when an op over these inputs should be recorded on the active tape.
bool should_record(std::initializer_list<const Tensor*> inputs);

Tensor make_output(Shape shape, bool requires_grad);

void record(std::string_view op, std::initializer_list<const Tensor*> inputs, const Tensor& output,
            std::function<void()> backward);

}  // namespace detail

}  // namespace degsr
