#include "dense/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace dense {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void require(bool cond, const std::string& message) {
  if (!cond) throw ShapeError(message);
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
  check();
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check();
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("tensor payload has " + std::to_string(data_.size()) +
                     " values, shape " + shape_str(shape_) + " needs " +
                     std::to_string(shape_size(shape_)));
  }
}

Tensor Tensor::row(std::vector<float> values) {
  const int n = static_cast<int>(values.size());
  return Tensor({1, n}, std::move(values));
}

void Tensor::check() const {
  if (shape_.empty() || shape_.size() > 3) {
    throw ShapeError("tensor rank must be 1..3, got shape " + shape_str(shape_));
  }
  for (int d : shape_) {
    if (d <= 0) throw ShapeError("tensor dims must be positive, got " + shape_str(shape_));
  }
}

std::span<float> Tensor::grad() {
  if (grad_.empty()) grad_.assign(data_.size(), 0.0f);
  return grad_;
}

void Tensor::zero_grad() { grad_.assign(data_.size(), 0.0f); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0;
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace dense
