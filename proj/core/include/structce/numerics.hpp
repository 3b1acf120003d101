#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "structce/errors.hpp"

namespace structce {

using cd = std::complex<double>;

namespace numerics {

using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

/// Centered modulo: u - p*floor(u/p + 1/2), result in [-p/2, p/2).
/// The half-period tie resolves downward, so +p/2 and -p/2 map to the same
/// residue -p/2. Throws std::invalid_argument for p <= 0.
double cmod(double u, double p);

/// Elementwise check |A - A^H| <= tol.
bool is_hermitian(const CMat& a, double tol = 1e-10);

/// Cholesky solve of A x = b for Hermitian positive definite A.
/// Throws std::invalid_argument if A is not square/Hermitian (tol 1e-10),
/// SingularMatrixError if a pivot is not positive.
CVec solve_hermitian(const CMat& a, const CVec& b);

/// Least squares min ||A x - b|| for a tall, full-column-rank A.
/// Throws std::invalid_argument if rows < cols, SingularMatrixError if A is
/// rank-deficient.
CVec lstsq(const CMat& a, const CVec& b);

/// Central finite differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps).
std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                     const std::vector<double>& x, double eps);

/// Deterministic splittable random stream.
///
/// The generator is splitmix64: the state advances by a fixed odd increment
/// and each output is a bijective finalizer of the state, so the sequence is
/// a pure function of (master_seed, stream_id) with no platform dependence
/// for integer and uniform draws. Gaussian draws use Box-Muller on those
/// uniforms and inherit the platform's libm rounding, which is stable across
/// runs on one machine. Distinct stream ids (and substream salts) are mixed
/// into decorrelated start states.
///
/// A stream is single-owner: share nothing, derive substreams instead.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t stream_id);

  /// Child stream with an id derived from (stream_id, salt).
  RngStream substream(std::uint64_t salt) const;

  std::uint64_t master_seed() const { return master_; }
  std::uint64_t stream_id() const { return id_; }

  std::uint64_t next_u64();
  /// Unbiased integer in [0, bound), bound >= 1 (Lemire rejection).
  std::uint64_t next_below(std::uint64_t bound);
  /// Uniform in [0, 1), 53 random bits.
  double next_double();
  /// Standard normal, Box-Muller pair with one value cached.
  double next_gaussian();
  /// Circularly symmetric complex normal with E|z|^2 = variance.
  cd next_cgaussian(double variance);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t master_;
  std::uint64_t id_;
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace numerics
}  // namespace structce
