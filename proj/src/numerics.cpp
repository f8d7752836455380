#include "ernn/numerics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <string>

namespace ernn {

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) {
  std::uint64_t x = seed;
  for (auto& word : s_) word = splitmix64(x);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  // Box-Muller without caching the sine branch keeps the stream state equal
  // to the four xoshiro words, which is what checkpoints serialize.
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log1p(-u1));
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

Vector Rng::gaussian_vector(int n, double std) {
  if (n < 0 || std < 0.0) throw InvalidInputError("gaussian_vector: n and std must be nonnegative");
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = std * normal();
  return v;
}

Matrix Rng::gaussian_matrix(int rows, int cols, double std) {
  if (rows < 0 || cols < 0 || std < 0.0)
    throw InvalidInputError("gaussian_matrix: dims and std must be nonnegative");
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = std * normal();
  return m;
}

std::vector<int> Rng::permutation(int n) {
  if (n < 0) throw InvalidInputError("permutation: n must be nonnegative");
  std::vector<int> p(n);
  for (int i = 0; i < n; ++i) p[i] = i;
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(next_u64() % static_cast<std::uint64_t>(i + 1));
    std::swap(p[i], p[j]);
  }
  return p;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw InvalidInputError("matmul: inner dimensions differ (" + std::to_string(a.cols()) +
                            " vs " + std::to_string(b.rows()) + ")");
  return a * b;
}

namespace {

constexpr double kPivotFloor = 1e-13;

Eigen::PartialPivLU<Matrix> checked_lu(const Matrix& a, Eigen::Index rhs_rows) {
  if (a.rows() != a.cols()) throw InvalidInputError("lu_solve: matrix must be square");
  if (a.rows() == 0) throw InvalidInputError("lu_solve: matrix is empty");
  if (a.rows() != rhs_rows) throw InvalidInputError("lu_solve: rhs has wrong number of rows");
  Eigen::PartialPivLU<Matrix> lu(a);
  const double min_pivot = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
  if (min_pivot < kPivotFloor)
    throw SingularMatrixError("lu_solve: pivot magnitude " + std::to_string(min_pivot) +
                              " below threshold");
  return lu;
}

}  // namespace

Vector lu_solve(const Matrix& a, const Vector& rhs) {
  return checked_lu(a, rhs.rows()).solve(rhs);
}

Matrix lu_solve(const Matrix& a, const Matrix& rhs) {
  return checked_lu(a, rhs.rows()).solve(rhs);
}

namespace {

constexpr double kDeflate = 1e-12;

void append_pair(double a, double b, double c, double d,
                 std::vector<std::complex<double>>& out) {
  const double mid = 0.5 * (a + d);
  const double det = a * d - b * c;
  const double disc = mid * mid - det;
  if (disc >= 0.0) {
    const double r = std::sqrt(disc);
    out.emplace_back(mid + r, 0.0);
    out.emplace_back(mid - r, 0.0);
  } else {
    const double r = std::sqrt(-disc);
    out.emplace_back(mid, r);
    out.emplace_back(mid, -r);
  }
}

// Francis double-shift QR on the Hessenberg block h[low..en], following the
// classic hqr organisation. Updates are confined to the active block since
// only eigenvalues are wanted. Returns eigenvalues of the whole matrix.
std::vector<std::complex<double>> schur_eigenvalues(Matrix& h, long max_sweeps,
                                                    int& sweeps_used) {
  const int n = static_cast<int>(h.rows());
  std::vector<std::complex<double>> eigs;
  eigs.reserve(n);

  double hnorm = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = std::max(0, i - 1); j < n; ++j) hnorm += std::abs(h(i, j));
  if (hnorm == 0.0) hnorm = 1.0;

  int en = n - 1;
  int its = 0;
  sweeps_used = 0;

  while (en >= 0) {
    // Find the start of the irreducible block ending at en.
    int l = en;
    while (l > 0) {
      double s = std::abs(h(l - 1, l - 1)) + std::abs(h(l, l));
      if (s == 0.0) s = hnorm;
      if (std::abs(h(l, l - 1)) <= kDeflate * s) {
        h(l, l - 1) = 0.0;
        break;
      }
      --l;
    }

    if (l == en) {
      eigs.emplace_back(h(en, en), 0.0);
      --en;
      its = 0;
      continue;
    }
    if (l == en - 1) {
      append_pair(h(l, l), h(l, l + 1), h(l + 1, l), h(l + 1, l + 1), eigs);
      en -= 2;
      its = 0;
      continue;
    }

    if (sweeps_used >= max_sweeps)
      throw ConvergenceError("eig: QR sweep budget of " + std::to_string(max_sweeps) +
                             " exhausted");
    ++sweeps_used;
    ++its;

    double x = h(en, en);
    double y = h(en - 1, en - 1);
    double w = h(en, en - 1) * h(en - 1, en);
    if (its % 10 == 0) {
      // Exceptional shift to break symmetric stalls.
      const double s = std::abs(h(en, en - 1)) + std::abs(h(en - 1, en - 2));
      x = y = 0.75 * s;
      w = -0.4375 * s * s;
    }

    // Look for two consecutive small subdiagonals to start the bulge at.
    int m = en - 2;
    double p = 0.0, q = 0.0, r = 0.0;
    for (; m >= l; --m) {
      const double z = h(m, m);
      double rr = x - z;
      double ss = y - z;
      p = (rr * ss - w) / h(m + 1, m) + h(m, m + 1);
      q = h(m + 1, m + 1) - z - rr - ss;
      r = h(m + 2, m + 1);
      const double scale = std::abs(p) + std::abs(q) + std::abs(r);
      p /= scale;
      q /= scale;
      r /= scale;
      if (m == l) break;
      const double tst1 =
          std::abs(p) * (std::abs(h(m - 1, m - 1)) + std::abs(z) + std::abs(h(m + 1, m + 1)));
      if (std::abs(h(m, m - 1)) * (std::abs(q) + std::abs(r)) <= kDeflate * tst1) break;
    }
    for (int i = m + 2; i <= en; ++i) {
      h(i, i - 2) = 0.0;
      if (i > m + 2) h(i, i - 3) = 0.0;
    }

    // Double QR sweep: chase the bulge from m to en.
    for (int k = m; k <= en - 1; ++k) {
      const bool notlast = k != en - 1;
      if (k != m) {
        p = h(k, k - 1);
        q = h(k + 1, k - 1);
        r = notlast ? h(k + 2, k - 1) : 0.0;
        x = std::abs(p) + std::abs(q) + std::abs(r);
        if (x == 0.0) continue;
        p /= x;
        q /= x;
        r /= x;
      }
      double s = std::sqrt(p * p + q * q + r * r);
      if (p < 0.0) s = -s;
      if (k != m)
        h(k, k - 1) = -s * x;
      else if (l != m)
        h(k, k - 1) = -h(k, k - 1);
      p += s;
      x = p / s;
      y = q / s;
      double z = r / s;
      q /= p;
      r /= p;

      for (int j = k; j <= en; ++j) {
        double pp = h(k, j) + q * h(k + 1, j);
        if (notlast) {
          pp += r * h(k + 2, j);
          h(k + 2, j) -= pp * z;
        }
        h(k + 1, j) -= pp * y;
        h(k, j) -= pp * x;
      }
      const int iend = std::min(en, k + 3);
      for (int i = l; i <= iend; ++i) {
        double pp = x * h(i, k) + y * h(i, k + 1);
        if (notlast) {
          pp += z * h(i, k + 2);
          h(i, k + 2) -= pp * r;
        }
        h(i, k + 1) -= pp * q;
        h(i, k) -= pp;
      }
    }
  }

  return eigs;
}

}  // namespace

Spectrum eig(const Matrix& a, long max_sweeps) {
  if (a.rows() != a.cols()) throw InvalidInputError("eig: matrix must be square");
  if (a.rows() > 256) throw InvalidInputError("eig: dimension capped at 256");
  const int n = static_cast<int>(a.rows());
  Spectrum out;
  if (n == 0) return out;
  if (n == 1) {
    out.eigenvalues.emplace_back(a(0, 0), 0.0);
    return out;
  }

  Matrix h;
  if (n == 2) {
    h = a;
  } else {
    Eigen::HessenbergDecomposition<Matrix> hess(a);
    h = hess.matrixH();
    for (int j = 0; j + 2 < n; ++j)
      for (int i = j + 2; i < n; ++i) h(i, j) = 0.0;
  }

  if (!h.allFinite()) throw NumericOverflowError("eig: input contains non-finite entries");

  out.eigenvalues = schur_eigenvalues(h, max_sweeps, out.iterations_used);
  std::sort(out.eigenvalues.begin(), out.eigenvalues.end(),
            [](const std::complex<double>& u, const std::complex<double>& v) {
              if (u.real() != v.real()) return u.real() < v.real();
              return u.imag() < v.imag();
            });
  return out;
}

Spectrum eig(const Matrix& a) {
  const long n = a.rows();
  return eig(a, std::max<long>(100, 100 * n * n));
}

double spectral_norm(const Matrix& a) {
  if (a.size() == 0) throw InvalidInputError("spectral_norm: matrix is empty");
  if (!a.allFinite()) throw NumericOverflowError("spectral_norm: non-finite entries");

  const int n = static_cast<int>(a.cols());
  Vector v = Vector::Ones(n) / std::sqrt(static_cast<double>(n));
  double sigma = 0.0;
  for (int it = 0; it < 10000; ++it) {
    Vector w = a.transpose() * (a * v);
    const double wnorm = w.norm();
    if (wnorm == 0.0) return 0.0;
    // Rayleigh quotient: exact for eigenvectors (identity gives 1.0, not
    // 1 +/- rounding), quadratically accurate otherwise.
    const double next = std::sqrt(v.dot(w) / v.dot(v));
    if (std::abs(next - sigma) <= 1e-10 * next) return next;
    sigma = next;
    v = w / wnorm;
  }
  return sigma;
}

}  // namespace ernn
