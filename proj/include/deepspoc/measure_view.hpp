#pragma once

#include <cstddef>

#include "deepspoc/rng.hpp"
#include "deepspoc/types.hpp"

namespace deepspoc {

/// Read-only view of a time-indexed probability measure mu_t, as consumed by
/// the drift and diffusion closures of a problem. Implementations must be
/// safe to query concurrently.
class MeasureView {
 public:
  virtual ~MeasureView() = default;

  virtual std::size_t dim() const = 0;

  /// Probability density of mu_t at each row of `x`.
  virtual void density(double t, const Matrix& x, Vector& out) const = 0;

  /// Spatial gradient of the density at each row of `x`.
  virtual void density_gradient(double /*t*/, const Matrix& /*x*/, Matrix& /*out*/) const {
    throw CapabilityError("this measure does not expose a spatial density gradient");
  }

  /// n independent draws from mu_t.
  virtual Matrix sample(double t, std::size_t n, CounterRng& rng) const = 0;

  /// Support points when mu_t is atomic (uniformly weighted unless
  /// atom_weights is non-null); nullptr otherwise.
  virtual const Matrix* atoms(double /*t*/) const { return nullptr; }
  virtual const Vector* atom_weights(double /*t*/) const { return nullptr; }
};

/// A view for problems whose coefficients ignore mu_t.
class NullView final : public MeasureView {
 public:
  explicit NullView(std::size_t dim) : dim_(dim) {}
  std::size_t dim() const override { return dim_; }
  void density(double, const Matrix&, Vector&) const override {
    throw CapabilityError("null measure view has no density");
  }
  Matrix sample(double, std::size_t, CounterRng&) const override {
    throw CapabilityError("null measure view cannot be sampled");
  }

 private:
  std::size_t dim_;
};

}  // namespace deepspoc
