/*
 * Copyright 2026 The flipaudit Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FLIPAUDIT_LINALG_H_
#define FLIPAUDIT_LINALG_H_

// Dense linear algebra used for redundancy detection and flip-direction
// analysis: Householder QR with column pivoting, singular values, numerical
// rank, condition number and PCA.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace flipaudit::linalg {

// Relative singular-value threshold used when no tolerance is supplied.
inline constexpr double kDefaultRankTolerance = 1e-8;

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(size_t rows, size_t cols, double fill = 0.0);
  Matrix(size_t rows, size_t cols, std::vector<double> entries);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix Identity(size_t n);

  size_t rows() const { return rows_; }
  size_t cols() const { return cols_; }
  bool empty() const { return entries_.empty(); }

  double& operator()(size_t r, size_t c) { return entries_[r * cols_ + c]; }
  double operator()(size_t r, size_t c) const {
    return entries_[r * cols_ + c];
  }

  std::span<double> row(size_t r) {
    return {entries_.data() + r * cols_, cols_};
  }
  std::span<const double> row(size_t r) const {
    return {entries_.data() + r * cols_, cols_};
  }
  std::vector<double> Column(size_t c) const;

  std::span<const double> entries() const { return entries_; }

  // Appends one row; the first row fixes the column count of an empty matrix.
  void AppendRow(std::span<const double> values);

  Matrix Transpose() const;
  // Columns in the given order.
  Matrix SelectColumns(std::span<const size_t> columns) const;
  Matrix SelectRows(std::span<const size_t> rows) const;

  double FrobeniusNorm() const;
  bool AllFinite() const;

  friend Matrix operator*(const Matrix& a, const Matrix& b);
  friend Matrix operator-(const Matrix& a, const Matrix& b);
  friend Matrix operator+(const Matrix& a, const Matrix& b);
  friend bool operator==(const Matrix& a, const Matrix& b) = default;

 private:
  size_t rows_ = 0;
  size_t cols_ = 0;
  std::vector<double> entries_;
};

// D * P = Q * R with P the column permutation. For an m x n input with
// k = min(m, n): q is m x k with orthonormal columns and r is k x n upper
// trapezoidal with non-increasing |r(i, i)|. permutation[j] is the original
// index of the j-th column of D * P.
struct PivotedQr {
  std::vector<size_t> permutation;
  Matrix q;
  Matrix r;
};

// Businger-Golub column pivoting with Householder reflections.
// Throws kInvalidInput on empty or non-finite input.
PivotedQr ComputePivotedQr(const Matrix& d);

// All min(m, n) singular values, sorted descending.
std::vector<double> SingularValues(const Matrix& d);

// sigma_max / sigma_min. Returns +infinity when sigma_min < 1e-14 sigma_max.
// Throws kDegenerateInput for an all-zero matrix.
double ConditionNumber(const Matrix& d);

// Number of singular values >= tol * sigma_max. tol must lie in (0, 1).
size_t NumericalRank(const Matrix& d, double tol = kDefaultRankTolerance);

// Same count read off the pivoted-QR diagonal: |r(i, i)| >= tol * |r(0, 0)|.
size_t NumericalRankFromQr(const PivotedQr& qr,
                           double tol = kDefaultRankTolerance);

// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
// Eigenvalues are sorted descending; eigenvectors are the rows of
// `vectors`, each oriented so its largest-magnitude entry is positive.
struct SymmetricEigen {
  std::vector<double> values;
  Matrix vectors;
};
SymmetricEigen ComputeSymmetricEigen(const Matrix& s);

struct PcaResult {
  Matrix components;  // One unit-norm component per row, most important first.
  std::vector<double> explained_variance;  // Non-increasing, >= 0.
  std::vector<double> mean;                // Column means removed before PCA.
};

// PCA of the rows of f from the eigen-decomposition of the sample covariance
// (centred, divided by rows - 1). Throws kDegenerateInput for fewer than two
// rows.
PcaResult ComputePca(const Matrix& f);

}  // namespace flipaudit::linalg

#endif  // FLIPAUDIT_LINALG_H_
