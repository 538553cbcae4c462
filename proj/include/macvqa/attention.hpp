#pragma once

#include <cmath>
#include <type_traits>

#include "macvqa/tape.hpp"

namespace macvqa {

/// Puts a parameter on the tape: trainable when mutable, constant when const.
template <class P>
Var bind(Tape& t, P& p) {
  if constexpr (std::is_const_v<P>) {
    return t.constant(p.value);
  } else {
    return t.param(p);
  }
}

namespace ad {

/// softmax(Q Kᵀ / sqrt(d_k)) V with the softmax taken per query row.
inline Var attention(Var q, Var k, Var v) {
  if (q.cols() != k.cols()) throw Error(ErrorKind::DimensionMismatch, "attention: query/key widths differ");
  if (k.rows() != v.rows()) throw Error(ErrorKind::DimensionMismatch, "attention: key/value counts differ");
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Var scores = scale(matmul(q, transpose(k)), inv_sqrt);
  return matmul(softmax_rows(scores), v);
}

}  // namespace ad
}  // namespace macvqa
