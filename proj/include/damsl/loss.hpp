#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "damsl/errors.hpp"
#include "damsl/matrix.hpp"

namespace damsl {

// Numerically stable row-wise softmax.
inline DenseMatrix softmax_rows(const DenseMatrix& logits) {
  DenseMatrix out(logits.rows, logits.cols);
  for (std::size_t r = 0; r < logits.rows; ++r) {
    double mx = logits(r, 0);
    for (std::size_t c = 1; c < logits.cols; ++c) mx = std::max(mx, logits(r, c));
    double sum = 0.0;
    for (std::size_t c = 0; c < logits.cols; ++c) {
      const double e = std::exp(logits(r, c) - mx);
      out(r, c) = e;
      sum += e;
    }
    for (std::size_t c = 0; c < logits.cols; ++c) out(r, c) /= sum;
  }
  return out;
}

struct LossAndGrad {
  double loss = 0.0;
  DenseMatrix logit_grad;
};

// Mean cross entropy over rows; gradient already divided by the row count,
// so each gradient row sums to zero.
inline LossAndGrad softmax_cross_entropy(const DenseMatrix& logits,
                                         const std::vector<std::size_t>& labels) {
  if (labels.size() != logits.rows)
    throw shape_error("softmax_cross_entropy: " + std::to_string(labels.size()) +
                      " labels for " + std::to_string(logits.rows) + " rows");
  for (std::size_t r = 0; r < labels.size(); ++r)
    if (labels[r] >= logits.cols)
      throw index_error("softmax_cross_entropy: label " + std::to_string(labels[r]) +
                        " out of range [0," + std::to_string(logits.cols) + ") at row " +
                        std::to_string(r));

  LossAndGrad out;
  out.logit_grad = softmax_rows(logits);
  const double inv_n = 1.0 / static_cast<double>(logits.rows);
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows; ++r) {
    double mx = logits(r, 0);
    for (std::size_t c = 1; c < logits.cols; ++c) mx = std::max(mx, logits(r, c));
    double lse = 0.0;
    for (std::size_t c = 0; c < logits.cols; ++c) lse += std::exp(logits(r, c) - mx);
    total += (mx + std::log(lse)) - logits(r, labels[r]);
    out.logit_grad(r, labels[r]) -= 1.0;
    for (std::size_t c = 0; c < logits.cols; ++c) out.logit_grad(r, c) *= inv_n;
  }
  out.loss = total * inv_n;
  return out;
}

// Argmax with lowest-index tie break, per row.
inline std::vector<std::size_t> argmax_rows(const DenseMatrix& m) {
  std::vector<std::size_t> out(m.rows, 0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < m.cols; ++c)
      if (m(r, c) > m(r, best)) best = c;
    out[r] = best;
  }
  return out;
}

}  // namespace damsl
