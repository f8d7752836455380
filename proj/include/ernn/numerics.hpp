#pragma once

#include <Eigen/Dense>
#include <array>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "ernn/errors.hpp"

namespace ernn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Deterministic random stream: xoshiro256** seeded through splitmix64,
// gaussians via Box-Muller. The entire state is the four words, so
// checkpoints can capture and restore it exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  double uniform();  // [0, 1)
  double normal();   // standard normal; consumes two uniforms per draw

  Vector gaussian_vector(int n, double std);
  Matrix gaussian_matrix(int rows, int cols, double std);

  // Fisher-Yates over 0..n-1.
  std::vector<int> permutation(int n);

  std::array<std::uint64_t, 4> state() const { return s_; }
  void set_state(const std::array<std::uint64_t, 4>& s) { s_ = s; }

 private:
  std::array<std::uint64_t, 4> s_{};
};

// Thin wrapper kept as the one place dimension checks happen for plain
// products assembled from runtime-sized inputs.
Matrix matmul(const Matrix& a, const Matrix& b);

// Solve a x = rhs by partially pivoted LU. Throws SingularMatrixError when
// any pivot magnitude falls below 1e-13.
Vector lu_solve(const Matrix& a, const Vector& rhs);
Matrix lu_solve(const Matrix& a, const Matrix& rhs);

struct Spectrum {
  std::vector<std::complex<double>> eigenvalues;  // sorted by (re, im)
  int iterations_used = 0;                        // QR sweeps spent
};

// Eigenvalues of a real square matrix: Hessenberg reduction followed by
// Francis double-shift QR with bulge chasing. Deflation drops a subdiagonal
// entry once it is below 1e-12 relative to its diagonal neighbours.
Spectrum eig(const Matrix& a);
Spectrum eig(const Matrix& a, long max_sweeps);  // exposed for budget tests

// Largest singular value via power iteration on a^T a, relative tolerance
// 1e-10, at most 10000 iterations.
double spectral_norm(const Matrix& a);

inline Vector gaussian(Rng& rng, int n, double std) { return rng.gaussian_vector(n, std); }

// Shortest decimal string that parses back to exactly the same double.
std::string format_double(double v);

}  // namespace ernn
