#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace salite {

using Shape = std::vector<std::size_t>;

template <typename T>
concept Real = std::same_as<T, float> || std::same_as<T, double>;

enum class Dtype { f32, f64 };

template <Real T>
constexpr Dtype dtype_of() {
  return std::same_as<T, float> ? Dtype::f32 : Dtype::f64;
}

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

/// Raised when operand extents disagree. Carries both offending values.
class DimensionError : public std::invalid_argument {
 public:
  DimensionError(std::string what, std::size_t expected, std::size_t actual)
      : std::invalid_argument(what + " (expected " + std::to_string(expected) + ", got " +
                              std::to_string(actual) + ")"),
        expected_(expected),
        actual_(actual) {}
  explicit DimensionError(const std::string& what)
      : std::invalid_argument(what), expected_(0), actual_(0) {}

  std::size_t expected() const noexcept { return expected_; }
  std::size_t actual() const noexcept { return actual_; }

 private:
  std::size_t expected_;
  std::size_t actual_;
};

/// Raised on NaN/Inf where a finite value is required.
class NumericError : public std::domain_error {
 public:
  NumericError(const std::string& what, std::size_t index = 0)
      : std::domain_error(what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

namespace detail {

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

template <Real T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(const Node&)> backward;

  bool is_leaf() const { return !backward; }

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

}  // namespace detail

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() { return detail::grad_mode(); }

/// Dense row-major N-D array handle. Copies share storage; use clone() for a deep copy.
template <Real T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0)) : node_(std::make_shared<detail::Node<T>>()) {
    node_->data.assign(salite::numel(shape), fill);
    node_->shape = std::move(shape);
  }

  Tensor(Shape shape, std::vector<T> values) : node_(std::make_shared<detail::Node<T>>()) {
    if (values.size() != salite::numel(shape))
      throw DimensionError("tensor value count does not match shape " + to_string(shape),
                           salite::numel(shape), values.size());
    node_->shape = std::move(shape);
    node_->data = std::move(values);
  }

  static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  /// Writable view; only meaningful for leaves (parameters, inputs).
  std::span<T> mutable_data() { return node_->data; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), T(0)); }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    node_->requires_grad = on;
    return *this;
  }

  const char* op_name() const { return node_->op; }

  T item() const {
    if (numel() != 1) throw DimensionError("item() requires a single-element tensor", 1, numel());
    return node_->data[0];
  }

  T operator[](std::size_t i) const { return node_->data[i]; }

  /// New leaf holding a copy of the values, disconnected from any graph.
  Tensor clone() const { return Tensor(shape(), node_->data); }
  Tensor detach() const { return clone(); }

  const NodePtr& node() const { return node_; }
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

 private:
  NodePtr node_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

template <Real To, Real From>
Tensor<To> cast(const Tensor<From>& t) {
  std::vector<To> v(t.data().begin(), t.data().end());
  return Tensor<To>(t.shape(), std::move(v));
}

namespace detail {

template <Real T>
using BackwardFn = std::function<void(const Node<T>&)>;

/// Wraps a freshly computed buffer as an op result, recording the graph edge
/// when grad mode is on and some input tracks gradients.
template <Real T>
Tensor<T> make_result(Shape shape, std::vector<T> values, const char* op,
                      std::initializer_list<const Tensor<T>*> inputs, BackwardFn<T> fn) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->op = op;
  if (grad_mode()) {
    bool track = false;
    for (const auto* in : inputs) track = track || in->requires_grad();
    if (track) {
      node->requires_grad = true;
      for (const auto* in : inputs) node->inputs.push_back(in->node());
      node->backward = std::move(fn);
    }
  }
  return Tensor<T>(std::move(node));
}

template <Real T>
Tensor<T> make_result(Shape shape, std::vector<T> values, const char* op,
                      const std::vector<Tensor<T>>& inputs, BackwardFn<T> fn) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->op = op;
  if (grad_mode()) {
    bool track = std::any_of(inputs.begin(), inputs.end(),
                             [](const Tensor<T>& t) { return t.requires_grad(); });
    if (track) {
      node->requires_grad = true;
      for (const auto& in : inputs) node->inputs.push_back(in.node());
      node->backward = std::move(fn);
    }
  }
  return Tensor<T>(std::move(node));
}

/// Gradient buffer of an input if it participates in backprop, else nullptr.
template <Real T>
T* grad_sink(const std::shared_ptr<Node<T>>& n) {
  return n->requires_grad ? n->ensure_grad().data() : nullptr;
}

}  // namespace detail

template <Real T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
}

template <Real T>
void require_rank(const Tensor<T>& a, std::size_t rank, const char* op) {
  if (a.rank() != rank)
    throw DimensionError(std::string(op) + ": wrong rank for " + to_string(a.shape()), rank,
                         a.rank());
}

}  // namespace salite
