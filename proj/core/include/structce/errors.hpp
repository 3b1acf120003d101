#pragma once

#include <stdexcept>
#include <string>

namespace structce {

/// Factorization failed: matrix is rank-deficient or not positive definite.
class SingularMatrixError : public std::runtime_error {
 public:
  explicit SingularMatrixError(const std::string& what) : std::runtime_error(what) {}
};

/// A channel-layer column collapsed below the usable norm during training.
class DegenerateWeightsError : public std::runtime_error {
 public:
  explicit DegenerateWeightsError(const std::string& what) : std::runtime_error(what) {}
};

/// A requested operating mode is not available for the given configuration.
class UnsupportedModeError : public std::runtime_error {
 public:
  explicit UnsupportedModeError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace structce
