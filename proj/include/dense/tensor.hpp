#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dense {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<int>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major float32 array of rank 1..3 with an optional gradient slot.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor row(std::vector<float> values);  // 1 x n

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  std::vector<float>& values() { return data_; }
  const std::vector<float>& values() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  float& at(int i, int j) { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }
  const float& at(int i, int j) const { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }
  float& at(int i, int j, int k) {
    return data_[(static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k];
  }
  const float& at(int i, int j, int k) const {
    return data_[(static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k];
  }

  bool has_grad() const { return !grad_.empty(); }
  std::span<float> grad();
  std::span<const float> grad() const { return grad_; }
  void zero_grad();
  void drop_grad() { grad_.clear(); }

  Tensor reshaped(Shape shape) const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

 private:
  void check() const;

  Shape shape_;
  std::vector<float> data_;
  std::vector<float> grad_;
};

// Bitwise equality of shape and payload.
bool bit_equal(const Tensor& a, const Tensor& b);
float max_abs_diff(const Tensor& a, const Tensor& b);

void require(bool cond, const std::string& message);

}  // namespace dense
