#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace fedlpa {

// Row-major dense storage, 64-bit everywhere: the Kronecker factors and the
// aggregation solver are ill-conditioned in single precision at lambda=1e-3.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Throws InputError naming `what` if any entry is NaN or infinite.
void require_finite(const Matrix& m, std::string_view what);

// A symmetric positive semi-definite matrix. Symmetry is exact: every
// constructor mirrors one triangle onto the other. Positive (semi)definiteness
// is a contract of the producer and is checked by Cholesky where it matters.
class SymmetricPsdMatrix {
 public:
  SymmetricPsdMatrix() = default;

  // Symmetrizes as (m + m^T) / 2. Throws DimensionError if m is not square.
  static SymmetricPsdMatrix from_symmetric_part(const Matrix& m);
  // Reads the upper triangle (row-major, i <= j) and mirrors it.
  static SymmetricPsdMatrix from_upper(std::span<const double> upper, std::size_t dim);
  static SymmetricPsdMatrix identity(std::size_t dim, double scale = 1.0);

  std::size_t dim() const { return static_cast<std::size_t>(m_.rows()); }
  const Matrix& matrix() const { return m_; }
  double operator()(std::size_t i, std::size_t j) const {
    return m_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  double trace() const { return m_.trace(); }

  // Row-major upper triangle, dim*(dim+1)/2 values.
  std::vector<double> upper() const;

  SymmetricPsdMatrix& operator+=(const SymmetricPsdMatrix& other);
  SymmetricPsdMatrix plus_diagonal(double shift) const;
  SymmetricPsdMatrix scaled(double factor) const;

  friend bool operator==(const SymmetricPsdMatrix& a, const SymmetricPsdMatrix& b) {
    return a.m_ == b.m_;
  }

 private:
  explicit SymmetricPsdMatrix(Matrix m) : m_(std::move(m)) {}
  Matrix m_;
};

inline constexpr std::size_t upper_triangle_size(std::size_t dim) {
  return dim * (dim + 1) / 2;
}

struct KronShape {
  std::uint64_t rows;
  std::uint64_t cols;
  std::uint64_t entries() const { return rows * cols; }
};

inline constexpr std::uint64_t kDefaultKronEntryCap = 100'000'000;

// Result shape of kron without building it.
KronShape kron_shape(std::uint64_t a_rows, std::uint64_t a_cols,
                     std::uint64_t b_rows, std::uint64_t b_cols);

// Explicit Kronecker product: entry (i*b.rows+k, j*b.cols+l) = a(i,j)*b(k,l).
// Only the small-instance oracle and tests use it; the aggregation path works
// through sandwich(). Throws DimensionError above `max_entries`.
Matrix kron(const Matrix& a, const Matrix& b,
            std::uint64_t max_entries = kDefaultKronEntryCap);

// Column-stacking vectorization, so that (A kron B) vec(M) = vec(B M A).
Vector vec(const Matrix& m);
Matrix unvec(const Vector& v, std::size_t rows, std::size_t cols);

// B * M * A. Throws DimensionError on inner-dimension mismatch.
Matrix sandwich(const Matrix& b, const Matrix& m, const Matrix& a);

// Cholesky solve. Throws SingularityError if the matrix is not strictly PD.
Vector solve_spd(const SymmetricPsdMatrix& m, const Vector& rhs);
// Column-wise solve for several right-hand sides at once.
Matrix solve_spd(const SymmetricPsdMatrix& m, const Matrix& rhs);

}  // namespace fedlpa
