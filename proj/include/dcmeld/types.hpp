#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dcmeld {

using Index = Eigen::Index;

/// Particle values are stored row-major so one particle is a contiguous span.
template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using RowMatrixXd = RowMatrix<double>;
using VectorXd = Eigen::VectorXd;
using MatrixXd = Eigen::MatrixXd;

using ConstSpan = std::span<const double>;
using MutSpan = std::span<double>;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline ConstSpan row_span(const RowMatrixXd& m, Index row) {
  return {m.data() + row * m.cols(), static_cast<std::size_t>(m.cols())};
}

inline MutSpan row_span(RowMatrixXd& m, Index row) {
  return {m.data() + row * m.cols(), static_cast<std::size_t>(m.cols())};
}

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user configuration (bad field, bad shape, unsatisfiable roles).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Dimension or index mismatch between collaborating objects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// All particle weights are zero (every log-weight is -inf).
class DegenerateSystemError : public Error {
 public:
  explicit DegenerateSystemError(const std::string& what, double temperature = -1.0)
      : Error(what), temperature_(temperature) {}
  /// Tempering exponent at which the system collapsed, or -1 when not applicable.
  double temperature() const noexcept { return temperature_; }

 private:
  double temperature_;
};

/// A density evaluated to NaN.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace dcmeld
