#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "deepspoc/error.hpp"

namespace deepspoc {

/// Point sets are stored one point per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
/// Column-major storage used by the network kernels (one sample per column).
using ColMatrix = Eigen::MatrixXd;

inline constexpr double kPi = std::numbers::pi;

/// Axis-aligned box prod_k [lo_k, hi_k].
struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  Box() = default;
  Box(std::vector<double> lower, std::vector<double> upper)
      : lo(std::move(lower)), hi(std::move(upper)) {
    validate();
  }

  /// The cube [-half_width, half_width]^dim.
  static Box cube(std::size_t dim, double half_width) {
    return Box(std::vector<double>(dim, -half_width),
               std::vector<double>(dim, half_width));
  }

  std::size_t dim() const { return lo.size(); }

  double volume() const {
    double v = 1.0;
    for (std::size_t k = 0; k < dim(); ++k) v *= hi[k] - lo[k];
    return v;
  }

  double width(std::size_t k) const { return hi[k] - lo[k]; }
  double center(std::size_t k) const { return 0.5 * (hi[k] + lo[k]); }

  template <typename Row>
  bool contains(const Row& x) const {
    for (std::size_t k = 0; k < dim(); ++k) {
      if (!(x[k] >= lo[k] && x[k] <= hi[k])) return false;
    }
    return true;
  }

  void validate() const {
    if (lo.size() != hi.size() || lo.empty()) {
      throw DimensionError("box bounds must be nonempty and of equal length");
    }
    for (std::size_t k = 0; k < lo.size(); ++k) {
      if (!(std::isfinite(lo[k]) && std::isfinite(hi[k]) && lo[k] < hi[k])) {
        throw InvalidParameter("box axis " + std::to_string(k) +
                               " must satisfy lo < hi with finite bounds");
      }
    }
  }

  bool operator==(const Box&) const = default;
};

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace deepspoc
