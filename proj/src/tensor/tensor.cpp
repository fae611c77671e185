#include "vxseg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "vxseg/errors.hpp"

namespace vxseg {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) {
    VXSEG_REQUIRE(e >= 0, "negative extent in shape ", shape_str(shape));
    n *= e;
  }
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

Tensor::Tensor(Shape shape, float fill)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  VXSEG_REQUIRE(static_cast<std::int64_t>(data_.size()) == shape_numel(shape_),
                "tensor buffer of ", data_.size(), " elements does not match shape ",
                shape_str(shape_));
}

std::int64_t Tensor::dim(int axis) const {
  VXSEG_REQUIRE(axis >= 0 && axis < rank(), "axis ", axis, " out of range for rank ", rank());
  return shape_[static_cast<std::size_t>(axis)];
}

float Tensor::item() const {
  VXSEG_REQUIRE(data_.size() == 1, "item() on tensor of shape ", shape_str(shape_));
  return data_[0];
}

void Tensor::fill(float value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

Tensor Tensor::reshaped(Shape shape) const {
  VXSEG_REQUIRE(shape_numel(shape) == static_cast<std::int64_t>(data_.size()),
                "cannot reshape ", shape_str(shape_), " to ", shape_str(shape));
  return Tensor(std::move(shape), data_);
}

double tensor_sum(const Tensor& t) {
  double s = 0.0;
  for (float v : t.values()) s += v;
  return s;
}

Tensor slice_batch(const Tensor& t, std::int64_t begin, std::int64_t end) {
  VXSEG_REQUIRE(t.rank() >= 1, "slice_batch on a scalar");
  VXSEG_REQUIRE(0 <= begin && begin <= end && end <= t.dim(0), "batch slice [", begin, ",", end,
                ") out of range for ", shape_str(t.shape()));
  Shape shape = t.shape();
  shape[0] = end - begin;
  const auto item = static_cast<std::int64_t>(t.size()) / std::max<std::int64_t>(t.dim(0), 1);
  std::vector<float> out(t.storage().begin() + begin * item, t.storage().begin() + end * item);
  return Tensor(std::move(shape), std::move(out));
}

Tensor stack_batch(std::span<const Tensor> items, bool along_existing) {
  VXSEG_REQUIRE(!items.empty(), "stack_batch of an empty list");
  const Shape& first = items.front().shape();
  Shape shape;
  if (along_existing) {
    VXSEG_REQUIRE(!first.empty(), "cannot concatenate scalars along the batch axis");
    shape = first;
    shape[0] = 0;
    for (const auto& t : items) {
      VXSEG_REQUIRE(t.rank() == static_cast<int>(first.size()) &&
                        std::equal(first.begin() + 1, first.end(), t.shape().begin() + 1),
                    "stack_batch shape mismatch: ", shape_str(first), " vs ",
                    shape_str(t.shape()));
      shape[0] += t.dim(0);
    }
  } else {
    shape.push_back(static_cast<std::int64_t>(items.size()));
    shape.insert(shape.end(), first.begin(), first.end());
    for (const auto& t : items) {
      VXSEG_REQUIRE(t.shape() == first, "stack_batch shape mismatch: ", shape_str(first), " vs ",
                    shape_str(t.shape()));
    }
  }
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(shape_numel(shape)));
  for (const auto& t : items) out.insert(out.end(), t.storage().begin(), t.storage().end());
  return Tensor(std::move(shape), std::move(out));
}

}  // namespace vxseg
