#include "fedlpa/linalg.hpp"

#include <string>

#include <Eigen/Cholesky>

#include "fedlpa/errors.hpp"

namespace fedlpa {

void require_finite(const Matrix& m, std::string_view what) {
  if (!m.allFinite()) {
    throw InputError(std::string(what) + ": non-finite entry");
  }
}

SymmetricPsdMatrix SymmetricPsdMatrix::from_symmetric_part(const Matrix& m) {
  if (m.rows() != m.cols()) {
    throw DimensionError("symmetric matrix must be square, got " +
                         std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
  require_finite(m, "symmetric matrix");
  Matrix s(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    s(i, i) = m(i, i);
    for (Eigen::Index j = i + 1; j < m.cols(); ++j) {
      const double v = 0.5 * (m(i, j) + m(j, i));
      s(i, j) = v;
      s(j, i) = v;
    }
  }
  return SymmetricPsdMatrix(std::move(s));
}

SymmetricPsdMatrix SymmetricPsdMatrix::from_upper(std::span<const double> upper,
                                                  std::size_t dim) {
  if (upper.size() != upper_triangle_size(dim)) {
    throw DimensionError("upper triangle of dim " + std::to_string(dim) + " needs " +
                         std::to_string(upper_triangle_size(dim)) + " values, got " +
                         std::to_string(upper.size()));
  }
  const auto n = static_cast<Eigen::Index>(dim);
  Matrix s(n, n);
  std::size_t p = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      s(i, j) = upper[p];
      s(j, i) = upper[p];
      ++p;
    }
  }
  require_finite(s, "symmetric matrix");
  return SymmetricPsdMatrix(std::move(s));
}

SymmetricPsdMatrix SymmetricPsdMatrix::identity(std::size_t dim, double scale) {
  const auto n = static_cast<Eigen::Index>(dim);
  return SymmetricPsdMatrix(Matrix::Identity(n, n) * scale);
}

std::vector<double> SymmetricPsdMatrix::upper() const {
  std::vector<double> out;
  out.reserve(upper_triangle_size(dim()));
  for (Eigen::Index i = 0; i < m_.rows(); ++i) {
    for (Eigen::Index j = i; j < m_.cols(); ++j) out.push_back(m_(i, j));
  }
  return out;
}

SymmetricPsdMatrix& SymmetricPsdMatrix::operator+=(const SymmetricPsdMatrix& other) {
  if (other.dim() != dim()) {
    throw DimensionError("symmetric sum: dim " + std::to_string(dim()) + " vs " +
                         std::to_string(other.dim()));
  }
  m_ += other.m_;
  return *this;
}

SymmetricPsdMatrix SymmetricPsdMatrix::plus_diagonal(double shift) const {
  Matrix s = m_;
  s.diagonal().array() += shift;
  return SymmetricPsdMatrix(std::move(s));
}

SymmetricPsdMatrix SymmetricPsdMatrix::scaled(double factor) const {
  return SymmetricPsdMatrix(m_ * factor);
}

KronShape kron_shape(std::uint64_t a_rows, std::uint64_t a_cols, std::uint64_t b_rows,
                     std::uint64_t b_cols) {
  return {a_rows * b_rows, a_cols * b_cols};
}

Matrix kron(const Matrix& a, const Matrix& b, std::uint64_t max_entries) {
  const KronShape shape = kron_shape(a.rows(), a.cols(), b.rows(), b.cols());
  if (shape.entries() > max_entries) {
    throw DimensionError("kron result " + std::to_string(shape.rows) + "x" +
                         std::to_string(shape.cols) + " exceeds cap of " +
                         std::to_string(max_entries) + " entries");
  }
  Matrix out(static_cast<Eigen::Index>(shape.rows), static_cast<Eigen::Index>(shape.cols));
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

Vector vec(const Matrix& m) {
  Vector v(m.size());
  Eigen::Index p = 0;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) v(p++) = m(i, j);
  }
  return v;
}

Matrix unvec(const Vector& v, std::size_t rows, std::size_t cols) {
  if (static_cast<std::size_t>(v.size()) != rows * cols) {
    throw DimensionError("unvec: length " + std::to_string(v.size()) + " != " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  Eigen::Index p = 0;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = v(p++);
  }
  return m;
}

Matrix sandwich(const Matrix& b, const Matrix& m, const Matrix& a) {
  if (b.cols() != m.rows() || m.cols() != a.rows()) {
    throw DimensionError("sandwich: B is " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + ", M is " + std::to_string(m.rows()) +
                         "x" + std::to_string(m.cols()) + ", A is " +
                         std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  }
  // Associate so the larger of the two products is done once.
  if (b.rows() * m.cols() * (b.cols() + a.cols()) <=
      m.rows() * a.cols() * (m.cols() + b.rows())) {
    Matrix bm = b * m;
    return bm * a;
  }
  Matrix ma = m * a;
  return b * ma;
}

namespace {

Eigen::LLT<Matrix> factor_or_throw(const SymmetricPsdMatrix& m) {
  Eigen::LLT<Matrix> llt(m.matrix());
  if (llt.info() != Eigen::Success) {
    throw SingularityError("Cholesky failed: matrix of dim " + std::to_string(m.dim()) +
                           " is not positive definite");
  }
  return llt;
}

}  // namespace

Vector solve_spd(const SymmetricPsdMatrix& m, const Vector& rhs) {
  if (static_cast<std::size_t>(rhs.size()) != m.dim()) {
    throw DimensionError("solve_spd: rhs length " + std::to_string(rhs.size()) +
                         " vs dim " + std::to_string(m.dim()));
  }
  return factor_or_throw(m).solve(rhs);
}

Matrix solve_spd(const SymmetricPsdMatrix& m, const Matrix& rhs) {
  if (static_cast<std::size_t>(rhs.rows()) != m.dim()) {
    throw DimensionError("solve_spd: rhs rows " + std::to_string(rhs.rows()) +
                         " vs dim " + std::to_string(m.dim()));
  }
  return factor_or_throw(m).solve(rhs);
}

}  // namespace fedlpa
