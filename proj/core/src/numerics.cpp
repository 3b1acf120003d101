#include "structce/numerics.hpp"

#include <cmath>
#include <stdexcept>

namespace structce::numerics {

double cmod(double u, double p) {
  if (!(p > 0.0)) {
    throw std::invalid_argument("cmod: period must be positive");
  }
  double r = u - p * std::floor(u / p + 0.5);
  // Guard against a stray ulp pushing the result onto the closed boundary.
  if (r >= 0.5 * p) r -= p;
  if (r < -0.5 * p) r += p;
  return r;
}

bool is_hermitian(const CMat& a, double tol) {
  if (a.rows() != a.cols()) return false;
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    for (Eigen::Index i = 0; i <= j; ++i) {
      if (std::abs(a(i, j) - std::conj(a(j, i))) > tol) return false;
    }
  }
  return true;
}

CVec solve_hermitian(const CMat& a, const CVec& b) {
  if (a.rows() != a.cols()) {
    throw std::invalid_argument("solve_hermitian: matrix must be square");
  }
  if (a.rows() != b.size()) {
    throw std::invalid_argument("solve_hermitian: dimension mismatch");
  }
  if (!is_hermitian(a)) {
    throw std::invalid_argument("solve_hermitian: matrix is not Hermitian");
  }
  Eigen::LLT<CMat> llt(a);
  if (llt.info() != Eigen::Success) {
    throw SingularMatrixError("solve_hermitian: matrix is not positive definite");
  }
  return llt.solve(b);
}

CVec lstsq(const CMat& a, const CVec& b) {
  if (a.rows() < a.cols()) {
    throw std::invalid_argument("lstsq: need rows >= cols");
  }
  if (a.rows() != b.size()) {
    throw std::invalid_argument("lstsq: dimension mismatch");
  }
  Eigen::ColPivHouseholderQR<CMat> qr(a);
  if (qr.rank() < a.cols()) {
    throw SingularMatrixError("lstsq: rank-deficient matrix");
  }
  return qr.solve(b);
}

std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                     const std::vector<double>& x, double eps) {
  std::vector<double> g(x.size());
  std::vector<double> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    double up = f(probe);
    probe[i] = x[i] - eps;
    double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

}  // namespace

RngStream::RngStream(std::uint64_t master_seed, std::uint64_t stream_id)
    : master_(master_seed), id_(stream_id) {
  state_ = mix64(master_seed + kGolden * mix64(stream_id + kGolden));
}

RngStream RngStream::substream(std::uint64_t salt) const {
  return RngStream(master_, mix64(id_ + kGolden * (salt + 1)));
}

std::uint64_t RngStream::next_u64() {
  state_ += kGolden;
  return mix64(state_);
}

std::uint64_t RngStream::next_below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("next_below: bound must be >= 1");
  const std::uint64_t threshold = (-bound) % bound;
  while (true) {
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * bound;
    if (static_cast<std::uint64_t>(m) >= threshold) {
      return static_cast<std::uint64_t>(m >> 64);
    }
  }
}

double RngStream::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::next_gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 1.0 - next_double();  // (0, 1], keeps log finite
  double u2 = next_double();
  double radius = std::sqrt(-2.0 * std::log(u1));
  double angle = 2.0 * M_PI * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

cd RngStream::next_cgaussian(double variance) {
  double s = std::sqrt(0.5 * variance);
  double re = next_gaussian();
  double im = next_gaussian();
  return {s * re, s * im};
}

}  // namespace structce::numerics
