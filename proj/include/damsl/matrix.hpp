#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "damsl/errors.hpp"

namespace damsl {

// Row-major dense matrix of 64-bit floats. Plain value type; all layer,
// score and weight storage in the library uses it.
struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}
  DenseMatrix(std::size_t r, std::size_t c, std::initializer_list<double> vals)
      : rows(r), cols(c), data(vals) {
    if (data.size() != r * c)
      throw shape_error("DenseMatrix init: " + std::to_string(data.size()) +
                        " values for " + std::to_string(r) + "x" + std::to_string(c));
  }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::size_t size() const { return data.size(); }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

namespace detail {
using EigenMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using EigenConstMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline EigenConstMap map(const DenseMatrix& m) {
  return EigenConstMap(m.data.data(), static_cast<Eigen::Index>(m.rows),
                       static_cast<Eigen::Index>(m.cols));
}
inline EigenMap map(DenseMatrix& m) {
  return EigenMap(m.data.data(), static_cast<Eigen::Index>(m.rows),
                  static_cast<Eigen::Index>(m.cols));
}
}  // namespace detail

inline void require_shape(const DenseMatrix& m, std::size_t rows, std::size_t cols,
                          const std::string& what) {
  if (m.rows != rows || m.cols != cols)
    throw shape_error(what + ": expected " + std::to_string(rows) + "x" +
                      std::to_string(cols) + ", got " + std::to_string(m.rows) + "x" +
                      std::to_string(m.cols));
}

inline void check_finite(const DenseMatrix& m, const std::string& where) {
  for (double v : m.data)
    if (!std::isfinite(v)) throw numeric_error("non-finite value in " + where);
}

// a (r x k) * b (k x c)
inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols != b.rows)
    throw shape_error("matmul: inner dims " + std::to_string(a.cols) + " vs " +
                      std::to_string(b.rows));
  DenseMatrix out(a.rows, b.cols);
  detail::map(out) = detail::map(a) * detail::map(b);
  return out;
}

// a^T (k x r)^T * b (k x c)
inline DenseMatrix matmul_trans_a(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows != b.rows)
    throw shape_error("matmul_trans_a: inner dims " + std::to_string(a.rows) + " vs " +
                      std::to_string(b.rows));
  DenseMatrix out(a.cols, b.cols);
  detail::map(out) = detail::map(a).transpose() * detail::map(b);
  return out;
}

// a (r x k) * b^T (c x k)^T
inline DenseMatrix matmul_trans_b(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols != b.cols)
    throw shape_error("matmul_trans_b: inner dims " + std::to_string(a.cols) + " vs " +
                      std::to_string(b.cols));
  DenseMatrix out(a.rows, b.rows);
  detail::map(out) = detail::map(a) * detail::map(b).transpose();
  return out;
}

inline void add_inplace(DenseMatrix& a, const DenseMatrix& b) {
  require_shape(b, a.rows, a.cols, "add_inplace");
  detail::map(a) += detail::map(b);
}

inline DenseMatrix transpose(const DenseMatrix& m) {
  DenseMatrix out(m.cols, m.rows);
  detail::map(out) = detail::map(m).transpose();
  return out;
}

inline std::vector<double> col_sums(const DenseMatrix& m) {
  std::vector<double> s(m.cols, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) s[c] += m(r, c);
  return s;
}

inline DenseMatrix row(const DenseMatrix& m, std::size_t r) {
  DenseMatrix out(1, m.cols);
  for (std::size_t c = 0; c < m.cols; ++c) out(0, c) = m(r, c);
  return out;
}

// Stack b's columns to the right of a's.
inline DenseMatrix hcat(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows != b.rows)
    throw shape_error("hcat: row counts " + std::to_string(a.rows) + " vs " +
                      std::to_string(b.rows));
  DenseMatrix out(a.rows, a.cols + b.cols);
  for (std::size_t r = 0; r < a.rows; ++r) {
    for (std::size_t c = 0; c < a.cols; ++c) out(r, c) = a(r, c);
    for (std::size_t c = 0; c < b.cols; ++c) out(r, a.cols + c) = b(r, c);
  }
  return out;
}

inline DenseMatrix vcat(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols != b.cols)
    throw shape_error("vcat: col counts " + std::to_string(a.cols) + " vs " +
                      std::to_string(b.cols));
  DenseMatrix out(a.rows + b.rows, a.cols);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.data.size());
  return out;
}

}  // namespace damsl
