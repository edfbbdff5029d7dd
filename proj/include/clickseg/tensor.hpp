#pragma once

// Minimal NCHW tensor with a gradient buffer and a reverse-mode tape.
//
// Ops record a backward closure on the tape whenever recording is enabled and
// at least one input requires a gradient. Tape::backward() replays closures
// in reverse creation order, which is a valid topological order because every
// op's inputs exist before the op itself.

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "clickseg/error.hpp"

namespace clickseg::nn {

struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const noexcept {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const {
    return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + "]";
  }
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0})
      : shape_(shape), data_(shape.numel(), fill) {
    require(shape.n > 0 && shape.c > 0 && shape.h > 0 && shape.w > 0, ErrorCode::Shape,
            "tensor extents must be positive: " + shape.str());
  }
  Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    require(data_.size() == shape_.numel(), ErrorCode::Shape,
            "tensor data length does not match shape " + shape_.str());
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t numel() const noexcept { return data_.size(); }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  bool requires_grad() const noexcept { return requires_grad_; }
  void set_requires_grad(bool v) { requires_grad_ = v; }

  bool has_grad() const noexcept { return !grad_.empty(); }
  // Allocates a zero gradient on first use.
  std::vector<T>& grad() {
    if (grad_.empty()) grad_.assign(data_.size(), T{0});
    return grad_;
  }
  const std::vector<T>& grad_view() const noexcept { return grad_; }
  void zero_grad() {
    if (!grad_.empty()) std::fill(grad_.begin(), grad_.end(), T{0});
  }
  void clear_grad() { grad_.clear(); }

  T& at(int n, int c, int y, int x) { return data_[offset(n, c, y, x)]; }
  T at(int n, int c, int y, int x) const { return data_[offset(n, c, y, x)]; }

  std::size_t offset(int n, int c, int y, int x) const noexcept {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
  std::vector<T> grad_;
  bool requires_grad_ = false;
};

template <typename T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

template <typename T>
TensorPtr<T> make_tensor(Shape shape, T fill = T{0}) {
  return std::make_shared<Tensor<T>>(shape, fill);
}

template <typename T>
TensorPtr<T> make_tensor(Shape shape, std::vector<T> data) {
  return std::make_shared<Tensor<T>>(shape, std::move(data));
}

template <typename T>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const noexcept { return recording_; }

  template <typename... Ptrs>
  bool wants_grad(const Ptrs&... inputs) const {
    return recording_ && ((inputs && inputs->requires_grad()) || ...);
  }

  void record(std::function<void()> step) { steps_.push_back(std::move(step)); }

  // Seeds d(output)/d(output) = 1 for a single-element output and replays
  // the recorded closures.
  void backward(const TensorPtr<T>& output) {
    require(output && output->numel() == 1, ErrorCode::Shape, "backward needs a scalar output");
    require(output->requires_grad(), ErrorCode::State, "output does not depend on tracked inputs");
    output->grad()[0] += T{1};
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
    steps_.clear();
  }

  void clear() { steps_.clear(); }
  std::size_t size() const noexcept { return steps_.size(); }

 private:
  bool recording_;
  std::vector<std::function<void()>> steps_;
};

}  // namespace clickseg::nn
