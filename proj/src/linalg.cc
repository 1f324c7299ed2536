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

#include "flipaudit/linalg.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>

#include "flipaudit/error.h"

namespace flipaudit::linalg {

Matrix::Matrix(size_t rows, size_t cols, double fill)
    : rows_(rows), cols_(cols), entries_(rows * cols, fill) {}

Matrix::Matrix(size_t rows, size_t cols, std::vector<double> entries)
    : rows_(rows), cols_(cols), entries_(std::move(entries)) {
  if (entries_.size() != rows * cols) {
    throw Error(ErrorCode::kShape,
                "matrix entries (" + std::to_string(entries_.size()) +
                    ") do not match " + std::to_string(rows) + "x" +
                    std::to_string(cols));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  entries_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) {
      throw Error(ErrorCode::kShape, "ragged matrix literal");
    }
    entries_.insert(entries_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::Identity(size_t n) {
  Matrix m(n, n);
  for (size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::vector<double> Matrix::Column(size_t c) const {
  std::vector<double> out(rows_);
  for (size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

void Matrix::AppendRow(std::span<const double> values) {
  if (rows_ == 0 && entries_.empty()) cols_ = values.size();
  if (values.size() != cols_) {
    throw Error(ErrorCode::kShape, "appended row has " +
                                       std::to_string(values.size()) +
                                       " entries, expected " +
                                       std::to_string(cols_));
  }
  entries_.insert(entries_.end(), values.begin(), values.end());
  ++rows_;
}

Matrix Matrix::Transpose() const {
  Matrix t(cols_, rows_);
  for (size_t r = 0; r < rows_; ++r) {
    for (size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  }
  return t;
}

Matrix Matrix::SelectColumns(std::span<const size_t> columns) const {
  Matrix out(rows_, columns.size());
  for (size_t r = 0; r < rows_; ++r) {
    for (size_t j = 0; j < columns.size(); ++j) {
      out(r, j) = (*this)(r, columns[j]);
    }
  }
  return out;
}

Matrix Matrix::SelectRows(std::span<const size_t> rows) const {
  Matrix out(rows.size(), cols_);
  for (size_t i = 0; i < rows.size(); ++i) {
    std::copy(row(rows[i]).begin(), row(rows[i]).end(), out.row(i).begin());
  }
  return out;
}

double Matrix::FrobeniusNorm() const {
  // Scaled accumulation avoids overflow for large entries.
  double scale = 0.0;
  for (double v : entries_) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) return 0.0;
  double sum = 0.0;
  for (double v : entries_) sum += (v / scale) * (v / scale);
  return scale * std::sqrt(sum);
}

bool Matrix::AllFinite() const {
  return std::all_of(entries_.begin(), entries_.end(),
                     [](double v) { return std::isfinite(v); });
}

Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols_ != b.rows_) {
    throw Error(ErrorCode::kShape, "matrix product " + std::to_string(a.rows_) +
                                       "x" + std::to_string(a.cols_) + " * " +
                                       std::to_string(b.rows_) + "x" +
                                       std::to_string(b.cols_));
  }
  Matrix c(a.rows_, b.cols_);
  for (size_t i = 0; i < a.rows_; ++i) {
    for (size_t k = 0; k < a.cols_; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (size_t j = 0; j < b.cols_; ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

namespace {

void CheckSameShape(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorCode::kShape, "matrix shapes differ");
  }
}

void CheckUsable(const Matrix& d, const char* what) {
  if (d.rows() == 0 || d.cols() == 0) {
    throw Error(ErrorCode::kInvalidInput, std::string(what) + ": empty matrix");
  }
  if (!d.AllFinite()) {
    throw Error(ErrorCode::kInvalidInput,
                std::string(what) + ": matrix has non-finite entries");
  }
}

// Column-major working copy; QR touches whole columns at a time.
struct ColumnMajor {
  size_t rows;
  std::vector<std::vector<double>> cols;

  explicit ColumnMajor(const Matrix& m) : rows(m.rows()), cols(m.cols()) {
    for (size_t c = 0; c < m.cols(); ++c) cols[c] = m.Column(c);
  }
};

double Dot(const double* a, const double* b, size_t n) {
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double Norm(const double* a, size_t n) {
  double scale = 0.0;
  for (size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(a[i]));
  if (scale == 0.0) return 0.0;
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += (a[i] / scale) * (a[i] / scale);
  return scale * std::sqrt(s);
}

// Singular values of a tall (rows >= cols) matrix stored by columns, using
// one-sided Jacobi rotations until every pair of columns is orthogonal.
std::vector<double> OneSidedJacobi(std::vector<std::vector<double>> cols) {
  const size_t n = cols.size();
  const size_t m = n == 0 ? 0 : cols[0].size();
  constexpr double kEps = std::numeric_limits<double>::epsilon();
  for (int sweep = 0; sweep < 80; ++sweep) {
    bool rotated = false;
    for (size_t p = 0; p + 1 < n; ++p) {
      for (size_t q = p + 1; q < n; ++q) {
        double* ap = cols[p].data();
        double* aq = cols[q].data();
        const double alpha = Dot(ap, ap, m);
        const double beta = Dot(aq, aq, m);
        const double gamma = Dot(ap, aq, m);
        if (gamma == 0.0 ||
            std::abs(gamma) <= kEps * std::sqrt(alpha * beta)) {
          continue;
        }
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (size_t i = 0; i < m; ++i) {
          const double x = ap[i];
          const double y = aq[i];
          ap[i] = c * x - s * y;
          aq[i] = s * x + c * y;
        }
      }
    }
    if (!rotated) break;
  }
  std::vector<double> sv(n);
  for (size_t j = 0; j < n; ++j) sv[j] = Norm(cols[j].data(), m);
  std::sort(sv.begin(), sv.end(), std::greater<>());
  return sv;
}

}  // namespace

Matrix operator-(const Matrix& a, const Matrix& b) {
  CheckSameShape(a, b);
  Matrix c = a;
  for (size_t i = 0; i < c.entries_.size(); ++i) c.entries_[i] -= b.entries_[i];
  return c;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  CheckSameShape(a, b);
  Matrix c = a;
  for (size_t i = 0; i < c.entries_.size(); ++i) c.entries_[i] += b.entries_[i];
  return c;
}

PivotedQr ComputePivotedQr(const Matrix& d) {
  CheckUsable(d, "pivoted QR");
  const size_t m = d.rows();
  const size_t n = d.cols();
  const size_t k = std::min(m, n);
  ColumnMajor a(d);
  std::vector<size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  // Householder vectors v_j (unit norm, length m - j); empty when the
  // reflector is the identity.
  std::vector<std::vector<double>> reflectors(k);

  for (size_t j = 0; j < k; ++j) {
    // Trailing column norms are recomputed rather than downdated, which
    // costs one extra pass but never suffers cancellation.
    size_t pivot = j;
    double best = -1.0;
    for (size_t c = j; c < n; ++c) {
      const double norm = Norm(a.cols[c].data() + j, m - j);
      if (norm > best) {
        best = norm;
        pivot = c;
      }
    }
    if (pivot != j) {
      std::swap(a.cols[j], a.cols[pivot]);
      std::swap(perm[j], perm[pivot]);
    }

    double* x = a.cols[j].data() + j;
    const size_t len = m - j;
    const double xnorm = Norm(x, len);
    if (xnorm == 0.0) continue;
    const double alpha = x[0] > 0.0 ? -xnorm : xnorm;
    std::vector<double> v(x, x + len);
    v[0] -= alpha;
    const double vnorm = Norm(v.data(), len);
    if (vnorm == 0.0) continue;
    for (double& e : v) e /= vnorm;
    x[0] = alpha;
    std::fill(x + 1, x + len, 0.0);
    for (size_t c = j + 1; c < n; ++c) {
      double* y = a.cols[c].data() + j;
      const double proj = 2.0 * Dot(v.data(), y, len);
      for (size_t i = 0; i < len; ++i) y[i] -= proj * v[i];
    }
    reflectors[j] = std::move(v);
  }

  PivotedQr out;
  out.permutation = std::move(perm);
  out.r = Matrix(k, n);
  for (size_t c = 0; c < n; ++c) {
    for (size_t i = 0; i <= std::min(c, k - 1); ++i) out.r(i, c) = a.cols[c][i];
  }
  // Q = H_0 H_1 ... H_{k-1} applied to the first k columns of the identity.
  std::vector<std::vector<double>> qcols(k, std::vector<double>(m, 0.0));
  for (size_t c = 0; c < k; ++c) qcols[c][c] = 1.0;
  for (size_t jj = k; jj-- > 0;) {
    const auto& v = reflectors[jj];
    if (v.empty()) continue;
    const size_t len = m - jj;
    for (size_t c = 0; c < k; ++c) {
      double* y = qcols[c].data() + jj;
      const double proj = 2.0 * Dot(v.data(), y, len);
      if (proj == 0.0) continue;
      for (size_t i = 0; i < len; ++i) y[i] -= proj * v[i];
    }
  }
  out.q = Matrix(m, k);
  for (size_t c = 0; c < k; ++c) {
    // Normalise signs so that diag(R) >= 0.
    const double sign = out.r(c, c) < 0.0 ? -1.0 : 1.0;
    for (size_t i = 0; i < m; ++i) out.q(i, c) = sign * qcols[c][i];
    if (sign < 0.0) {
      for (size_t cc = c; cc < n; ++cc) out.r(c, cc) = -out.r(c, cc);
    }
  }
  return out;
}

std::vector<double> SingularValues(const Matrix& d) {
  CheckUsable(d, "singular values");
  const Matrix& tall_source = d;
  Matrix transposed;
  const Matrix* tall = &tall_source;
  if (d.rows() < d.cols()) {
    transposed = d.Transpose();
    tall = &transposed;
  }
  // Jacobi on the square triangular factor is far cheaper than on D itself
  // and has the same singular values.
  const PivotedQr qr = ComputePivotedQr(*tall);
  std::vector<std::vector<double>> cols(qr.r.cols());
  for (size_t c = 0; c < qr.r.cols(); ++c) cols[c] = qr.r.Column(c);
  return OneSidedJacobi(std::move(cols));
}

double ConditionNumber(const Matrix& d) {
  const std::vector<double> sv = SingularValues(d);
  const double smax = sv.front();
  if (smax == 0.0) {
    throw Error(ErrorCode::kDegenerateInput,
                "condition number of an all-zero matrix");
  }
  const double smin = sv.back();
  if (smin < 1e-14 * smax) return std::numeric_limits<double>::infinity();
  return smax / smin;
}

namespace {
void CheckTolerance(double tol) {
  if (!(tol > 0.0 && tol < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "rank tolerance must lie in (0, 1), got " + std::to_string(tol));
  }
}
}  // namespace

size_t NumericalRank(const Matrix& d, double tol) {
  CheckTolerance(tol);
  const std::vector<double> sv = SingularValues(d);
  if (sv.front() == 0.0) return 0;
  return static_cast<size_t>(std::count_if(
      sv.begin(), sv.end(), [&](double s) { return s >= tol * sv.front(); }));
}

size_t NumericalRankFromQr(const PivotedQr& qr, double tol) {
  CheckTolerance(tol);
  const size_t k = std::min(qr.r.rows(), qr.r.cols());
  if (k == 0 || qr.r(0, 0) == 0.0) return 0;
  const double lead = std::abs(qr.r(0, 0));
  size_t rank = 0;
  while (rank < k && std::abs(qr.r(rank, rank)) >= tol * lead) ++rank;
  return rank;
}

SymmetricEigen ComputeSymmetricEigen(const Matrix& s) {
  if (s.rows() != s.cols()) {
    throw Error(ErrorCode::kShape, "eigen-decomposition needs a square matrix");
  }
  CheckUsable(s, "symmetric eigen-decomposition");
  const size_t n = s.rows();
  Matrix a = s;
  Matrix v = Matrix::Identity(n);  // Columns are eigenvectors.
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    double diag = 0.0;
    for (size_t p = 0; p < n; ++p) {
      diag += a(p, p) * a(p, p);
      for (size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    }
    if (off == 0.0 || off <= 1e-32 * diag) break;
    for (size_t p = 0; p + 1 < n; ++p) {
      for (size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
        for (size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - sn * vkq;
          v(k, q) = sn * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t i, size_t j) { return a(i, i) > a(j, j); });
  SymmetricEigen out;
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (size_t r = 0; r < n; ++r) {
    const size_t src = order[r];
    out.values[r] = a(src, src);
    size_t argmax = 0;
    for (size_t k = 1; k < n; ++k) {
      if (std::abs(v(k, src)) > std::abs(v(argmax, src))) argmax = k;
    }
    const double sign = v(argmax, src) < 0.0 ? -1.0 : 1.0;
    for (size_t k = 0; k < n; ++k) out.vectors(r, k) = sign * v(k, src);
  }
  return out;
}

PcaResult ComputePca(const Matrix& f) {
  if (f.rows() < 2) {
    throw Error(ErrorCode::kDegenerateInput,
                "PCA needs at least two rows, got " + std::to_string(f.rows()));
  }
  CheckUsable(f, "PCA");
  const size_t m = f.rows();
  const size_t n = f.cols();
  PcaResult out;
  out.mean.assign(n, 0.0);
  for (size_t r = 0; r < m; ++r) {
    for (size_t c = 0; c < n; ++c) out.mean[c] += f(r, c);
  }
  for (double& v : out.mean) v /= static_cast<double>(m);

  Matrix cov(n, n);
  std::vector<double> centred(n);
  for (size_t r = 0; r < m; ++r) {
    for (size_t c = 0; c < n; ++c) centred[c] = f(r, c) - out.mean[c];
    for (size_t i = 0; i < n; ++i) {
      if (centred[i] == 0.0) continue;
      for (size_t j = i; j < n; ++j) cov(i, j) += centred[i] * centred[j];
    }
  }
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i; j < n; ++j) {
      cov(i, j) /= static_cast<double>(m - 1);
      cov(j, i) = cov(i, j);
    }
  }
  SymmetricEigen eig = ComputeSymmetricEigen(cov);
  out.components = std::move(eig.vectors);
  out.explained_variance = std::move(eig.values);
  for (double& v : out.explained_variance) v = std::max(v, 0.0);
  return out;
}

}  // namespace flipaudit::linalg
