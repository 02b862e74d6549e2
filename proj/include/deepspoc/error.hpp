#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace deepspoc {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class CapabilityError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class EmptyBatchError : public Error {
 public:
  using Error::Error;
};

class DegenerateDensityError : public Error {
 public:
  using Error::Error;
};

class HypothesisViolation : public Error {
 public:
  using Error::Error;
};

/// A particle position became non-finite during simulation.
class BlowUpError : public NumericError {
 public:
  BlowUpError(std::size_t particle, std::size_t node)
      : NumericError("blow-up: particle " + std::to_string(particle) +
                     " is non-finite at time node " + std::to_string(node)),
        particle_(particle),
        node_(node) {}

  std::size_t particle() const { return particle_; }
  std::size_t node() const { return node_; }

 private:
  std::size_t particle_;
  std::size_t node_;
};

class SamplingFailure : public Error {
 public:
  SamplingFailure(const std::string& what, double acceptance_rate)
      : Error(what + " (measured acceptance rate " +
              std::to_string(acceptance_rate) + ")"),
        acceptance_rate_(acceptance_rate) {}

  double acceptance_rate() const { return acceptance_rate_; }

 private:
  double acceptance_rate_;
};

}  // namespace deepspoc
