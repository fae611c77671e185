#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace vxseg {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major float tensor. 5-D volumes use [batch, channel, depth,
// height, width] with width fastest.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }
  static Tensor scalar(float value) { return Tensor(Shape{}, std::vector<float>{value}); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int axis) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }
  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  const std::vector<float>& storage() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // Scalar value of a one-element tensor.
  float item() const;

  void fill(float value);
  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  // Element offset of a 5-D index.
  std::size_t offset5(std::int64_t n, std::int64_t c, std::int64_t z, std::int64_t y,
                      std::int64_t x) const {
    return static_cast<std::size_t>((((n * shape_[1] + c) * shape_[2] + z) * shape_[3] + y) *
                                        shape_[4] +
                                    x);
  }
  float& at5(std::int64_t n, std::int64_t c, std::int64_t z, std::int64_t y, std::int64_t x) {
    return data_[offset5(n, c, z, y, x)];
  }
  float at5(std::int64_t n, std::int64_t c, std::int64_t z, std::int64_t y,
            std::int64_t x) const {
    return data_[offset5(n, c, z, y, x)];
  }

  Tensor reshaped(Shape shape) const;

 private:
  Shape shape_;
  std::vector<float> data_;
};

// Sum of all elements accumulated in double.
double tensor_sum(const Tensor& t);

// Copies batch items [begin, end) of a tensor whose first axis is the batch.
Tensor slice_batch(const Tensor& t, std::int64_t begin, std::int64_t end);

// Stacks equally shaped tensors along a new leading batch axis, or along the
// existing leading axis when `along_existing` is set.
Tensor stack_batch(std::span<const Tensor> items, bool along_existing = false);

}  // namespace vxseg
