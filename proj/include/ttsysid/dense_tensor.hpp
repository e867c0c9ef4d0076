#pragma once

#include "ttsysid/core.hpp"

#include <cmath>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

namespace ttsysid {

// Real tensor stored row-major over its shape: the last index runs fastest.
class DenseTensor {
 public:
  DenseTensor() = default;

  explicit DenseTensor(std::vector<Index> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<std::size_t>(checked_size(shape_)), 0.0);
  }

  DenseTensor(std::vector<Index> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    require_shape(static_cast<Index>(data_.size()) == checked_size(shape_),
                  "DenseTensor: data length does not match shape");
  }

  const std::vector<Index>& shape() const { return shape_; }
  Index order() const { return static_cast<Index>(shape_.size()); }
  Index size() const { return static_cast<Index>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<const double> values() const { return data_; }

  double& operator[](Index flat) { return data_[static_cast<std::size_t>(flat)]; }
  double operator[](Index flat) const { return data_[static_cast<std::size_t>(flat)]; }

  Index flat_index(std::span<const Index> idx) const {
    require_shape(static_cast<Index>(idx.size()) == order(), "DenseTensor: index arity");
    Index flat = 0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      require_shape(idx[k] >= 0 && idx[k] < shape_[k], "DenseTensor: index out of range");
      flat = flat * shape_[k] + idx[k];
    }
    return flat;
  }

  double& at(std::span<const Index> idx) { return data_[static_cast<std::size_t>(flat_index(idx))]; }
  double at(std::span<const Index> idx) const {
    return data_[static_cast<std::size_t>(flat_index(idx))];
  }
  double& at(std::initializer_list<Index> idx) { return at(std::span<const Index>(idx.begin(), idx.size())); }
  double at(std::initializer_list<Index> idx) const {
    return at(std::span<const Index>(idx.begin(), idx.size()));
  }

  double frobenius_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
  }

  Eigen::Map<const Vector> as_vector() const { return {data_.data(), size()}; }
  Eigen::Map<Vector> as_vector() { return {data_.data(), size()}; }

 private:
  static Index checked_size(const std::vector<Index>& shape) {
    require_shape(!shape.empty(), "DenseTensor: empty shape");
    Index n = 1;
    for (Index s : shape) {
      require_shape(s >= 1, "DenseTensor: shape entries must be positive");
      if (n > kDenseEntryLimit / s) throw SizeGuardError("DenseTensor: exceeds dense-size guard");
      n *= s;
    }
    return n;
  }

  std::vector<Index> shape_;
  std::vector<double> data_;
};

inline double relative_difference(const DenseTensor& a, const DenseTensor& b) {
  require_shape(a.shape() == b.shape(), "relative_difference: shape mismatch");
  const double nb = b.frobenius_norm();
  const double diff = (a.as_vector() - b.as_vector()).norm();
  return nb > 0.0 ? diff / nb : diff;
}

}  // namespace ttsysid
