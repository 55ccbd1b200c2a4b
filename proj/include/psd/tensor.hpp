#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "psd/errors.hpp"

namespace psd {

// Dense n-dimensional array of doubles, row-major. The single currency of the
// network code; 64-bit floats throughout so gradient checks are meaningful.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    std::size_t n = 1;
    for (const int d : shape_) {
      if (d <= 0) throw DataError("tensor dimensions must be positive");
      n *= static_cast<std::size_t>(d);
    }
    data_.assign(n, 0.0);
  }

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const std::vector<int>& shape() const { return shape_; }
  int dim(std::size_t i) const { return shape_[i]; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool operator==(const Tensor&) const = default;

  void ensure_finite(const std::string& context) const {
    for (const double v : data_)
      if (!std::isfinite(v)) throw NumericError("non-finite value in " + context);
  }

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

}  // namespace psd
