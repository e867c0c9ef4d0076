#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ttsysid {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible dimensions between operands, or a malformed container.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A local linear system without regularisation had no unique solution.
class SingularSystemError : public Error {
 public:
  using Error::Error;
};

// Refusal to materialise an object larger than the dense-size guard.
class SizeGuardError : public Error {
 public:
  using Error::Error;
};

inline constexpr Index kDenseEntryLimit = 100'000'000;

inline void require(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

inline void require_shape(bool condition, const std::string& message) {
  if (!condition) throw ShapeError(message);
}

}  // namespace ttsysid
