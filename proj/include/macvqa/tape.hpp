#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "macvqa/error.hpp"
#include "macvqa/linalg.hpp"

namespace macvqa {

/// A trainable matrix plus its gradient accumulator.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

  void zero_grad() { grad = Matrix(value.rows(), value.cols()); }
  void reset(Matrix v) {
    value = std::move(v);
    zero_grad();
  }
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while its tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
};

/// Reverse-mode record of matrix operations. Nodes are appended after their
/// inputs, so iterating backwards over the node list is a reverse topological
/// order. Single-threaded.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Var constant(Matrix m) { return push(std::move(m), nullptr); }

  Var param(Parameter& p) {
    Var v = push(p.value, nullptr);
    nodes_[v.id].param = &p;
    return v;
  }

  Var push(Matrix value, Backward backward) {
    nodes_.push_back(Node{std::move(value), Matrix{}, std::move(backward), nullptr});
    return Var{this, nodes_.size() - 1};
  }

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  Matrix& grad(std::size_t id) { return nodes_[id].grad; }
  const Matrix& grad(Var v) const {
    check_owned(v);
    return nodes_[v.id].grad;
  }

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Adds d(loss)/d(param) into every Parameter registered on this tape.
  /// Parameters that never reached the tape keep whatever grad they had.
  void backward(Var loss) {
    check_owned(loss);
    if (nodes_[loss.id].value.rows() != 1 || nodes_[loss.id].value.cols() != 1)
      throw Error(ErrorKind::DetachedNode, "backward requires a 1x1 scalar loss node");
    for (auto& n : nodes_) n.grad = Matrix(n.value.rows(), n.value.cols());
    nodes_[loss.id].grad(0, 0) = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (n.backward) n.backward(*this, i);
    }
    for (std::size_t i = 0; i <= loss.id; ++i) {
      auto& n = nodes_[i];
      if (n.param == nullptr) continue;
      auto& g = n.param->grad;
      if (!g.same_shape(n.grad)) g = Matrix(n.grad.rows(), n.grad.cols());
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad[k];
    }
  }

  void accumulate(std::size_t id, const Matrix& g) {
    auto& dst = nodes_[id].grad;
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += g[k];
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    Parameter* param;
  };

  void check_owned(Var v) const {
    if (v.tape != this || v.id >= nodes_.size())
      throw Error(ErrorKind::DetachedNode, "node does not belong to this tape");
  }

  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape->value(id); }

namespace ad {

namespace detail {
inline Tape& same_tape(Var a, Var b) {
  if (a.tape != b.tape || a.tape == nullptr) throw Error(ErrorKind::DetachedNode, "operands live on different tapes");
  return *a.tape;
}
inline void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) throw Error(ErrorKind::DimensionMismatch, std::string(op) + ": shapes differ");
}
}  // namespace detail

inline Var matmul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  Matrix out = macvqa::matmul(a.value(), b.value());
  return t.push(std::move(out), [a = a.id, b = b.id](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    tp.accumulate(a, matmul_transposed(g, tp.value(b)));
    tp.accumulate(b, macvqa::matmul(transpose(tp.value(a)), g));
  });
}

/// x · Wᵀ, i.e. applies the out×in map W to every row of x.
inline Var linear(Var x, Var w) {
  Tape& t = detail::same_tape(x, w);
  if (x.cols() != w.cols()) throw Error(ErrorKind::DimensionMismatch, "linear: input width does not match weight");
  Matrix out = matmul_transposed(x.value(), w.value());
  return t.push(std::move(out), [x = x.id, w = w.id](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    tp.accumulate(x, macvqa::matmul(g, tp.value(w)));
    tp.accumulate(w, macvqa::matmul(transpose(g), tp.value(x)));
  });
}

inline Var transpose(Var a) {
  return a.tape->push(macvqa::transpose(a.value()), [a = a.id](Tape& tp, std::size_t self) {
    tp.accumulate(a, macvqa::transpose(tp.grad(self)));
  });
}

inline Var add(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  detail::require_same_shape(a.value(), b.value(), "add");
  Matrix out = a.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += b.value()[k];
  return t.push(std::move(out), [a = a.id, b = b.id](Tape& tp, std::size_t self) {
    tp.accumulate(a, tp.grad(self));
    tp.accumulate(b, tp.grad(self));
  });
}

inline Var sub(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  detail::require_same_shape(a.value(), b.value(), "sub");
  Matrix out = a.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] -= b.value()[k];
  return t.push(std::move(out), [a = a.id, b = b.id](Tape& tp, std::size_t self) {
    tp.accumulate(a, tp.grad(self));
    Matrix neg = tp.grad(self);
    for (auto& v : neg.values()) v = -v;
    tp.accumulate(b, neg);
  });
}

inline Var hadamard(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  detail::require_same_shape(a.value(), b.value(), "hadamard");
  Matrix out = a.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= b.value()[k];
  return t.push(std::move(out), [a = a.id, b = b.id](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    Matrix ga = g, gb = g;
    for (std::size_t k = 0; k < g.size(); ++k) {
      ga[k] *= tp.value(b)[k];
      gb[k] *= tp.value(a)[k];
    }
    tp.accumulate(a, ga);
    tp.accumulate(b, gb);
  });
}

inline Var scale(Var a, double c) {
  Matrix out = a.value();
  for (auto& v : out.values()) v *= c;
  return a.tape->push(std::move(out), [a = a.id, c](Tape& tp, std::size_t self) {
    Matrix g = tp.grad(self);
    for (auto& v : g.values()) v *= c;
    tp.accumulate(a, g);
  });
}

/// Multiplies every entry of `a` by the 1×1 node `s`.
inline Var scale_by(Var a, Var s) {
  Tape& t = detail::same_tape(a, s);
  if (s.rows() != 1 || s.cols() != 1) throw Error(ErrorKind::DimensionMismatch, "scale_by: scale must be 1x1");
  const double c = s.scalar();
  Matrix out = a.value();
  for (auto& v : out.values()) v *= c;
  return t.push(std::move(out), [a = a.id, s = s.id](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    const Matrix& x = tp.value(a);
    const double c = tp.value(s)(0, 0);
    Matrix ga = g;
    double gs = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
      ga[k] *= c;
      gs += g[k] * x[k];
    }
    tp.accumulate(a, ga);
    tp.accumulate(s, Matrix(1, 1, gs));
  });
}

/// Adds a constant to every entry.
inline Var shift(Var a, double c) {
  Matrix out = a.value();
  for (auto& v : out.values()) v += c;
  return a.tape->push(std::move(out), [a = a.id](Tape& tp, std::size_t self) { tp.accumulate(a, tp.grad(self)); });
}

/// Adds the 1×m row `r` to every row of the n×m matrix `a`.
inline Var add_row(Var a, Var r) {
  Tape& t = detail::same_tape(a, r);
  if (r.rows() != 1 || r.cols() != a.cols()) throw Error(ErrorKind::DimensionMismatch, "add_row: row width mismatch");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto o = out.row(i);
    for (std::size_t j = 0; j < o.size(); ++j) o[j] += r.value()(0, j);
  }
  return t.push(std::move(out), [a = a.id, r = r.id](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    tp.accumulate(a, g);
    Matrix gr(1, g.cols());
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) gr(0, j) += g(i, j);
    tp.accumulate(r, gr);
  });
}

inline Var relu(Var a) {
  Matrix out = a.value();
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return a.tape->push(std::move(out), [a = a.id](Tape& tp, std::size_t self) {
    Matrix g = tp.grad(self);
    for (std::size_t k = 0; k < g.size(); ++k)
      if (!(tp.value(a)[k] > 0.0)) g[k] = 0.0;
    tp.accumulate(a, g);
  });
}

inline Var sigmoid(Var a) {
  Matrix out = a.value();
  for (auto& v : out.values()) v = macvqa::sigmoid(v);
  return a.tape->push(std::move(out), [a = a.id](Tape& tp, std::size_t self) {
    Matrix g = tp.grad(self);
    const Matrix& y = tp.value(self);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] *= y[k] * (1.0 - y[k]);
    tp.accumulate(a, g);
  });
}

/// Row-wise softmax with max subtraction.
inline Var softmax_rows(Var a) {
  require_finite(a.value().values(), "softmax");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.rows(); ++i) softmax_inplace(out.row(i));
  return a.tape->push(std::move(out), [a = a.id](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    const Matrix& y = tp.value(self);
    Matrix ga(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) s += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < g.cols(); ++j) ga(i, j) = y(i, j) * (g(i, j) - s);
    }
    tp.accumulate(a, ga);
  });
}

inline Var log_softmax_rows(Var a) {
  require_finite(a.value().values(), "log_softmax");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (double v : r) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    for (double& v : r) v -= lse;
  }
  return a.tape->push(std::move(out), [a = a.id](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    const Matrix& y = tp.value(self);
    Matrix ga(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) s += g(i, j);
      for (std::size_t j = 0; j < g.cols(); ++j) ga(i, j) = g(i, j) - std::exp(y(i, j)) * s;
    }
    tp.accumulate(a, ga);
  });
}

inline Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.tape->push(Matrix(1, 1, s), [a = a.id](Tape& tp, std::size_t self) {
    const Matrix& src = tp.value(a);
    tp.accumulate(a, Matrix(src.rows(), src.cols(), tp.grad(self)(0, 0)));
  });
}

/// Sum of squared entries, as a 1×1 node.
inline Var sum_sq(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v * v;
  return a.tape->push(Matrix(1, 1, s), [a = a.id](Tape& tp, std::size_t self) {
    Matrix g = tp.value(a);
    const double up = 2.0 * tp.grad(self)(0, 0);
    for (auto& v : g.values()) v *= up;
    tp.accumulate(a, g);
  });
}

/// Column means: n×m -> 1×m.
inline Var mean_rows(Var a) {
  const Matrix& x = a.value();
  if (x.rows() == 0) throw Error(ErrorKind::DimensionMismatch, "mean_rows of empty matrix");
  Matrix out(1, x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(0, j) += x(i, j);
  const double inv = 1.0 / static_cast<double>(x.rows());
  for (auto& v : out.values()) v *= inv;
  return a.tape->push(std::move(out), [a = a.id, inv](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    Matrix ga(tp.value(a).rows(), g.cols());
    for (std::size_t i = 0; i < ga.rows(); ++i)
      for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) = g(0, j) * inv;
    tp.accumulate(a, ga);
  });
}

/// Stacks `b` below `a`.
inline Var concat_rows(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  if (a.cols() != b.cols()) throw Error(ErrorKind::DimensionMismatch, "concat_rows: widths differ");
  std::vector<double> data = a.value().values();
  data.insert(data.end(), b.value().values().begin(), b.value().values().end());
  const std::size_t ra = a.rows();
  return t.push(Matrix(ra + b.rows(), a.cols(), std::move(data)), [a = a.id, b = b.id, ra](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    const std::size_t split = ra * g.cols();
    tp.accumulate(a, Matrix(ra, g.cols(), std::vector<double>(g.values().begin(), g.values().begin() + split)));
    tp.accumulate(b, Matrix(g.rows() - ra, g.cols(), std::vector<double>(g.values().begin() + split, g.values().end())));
  });
}

/// Places `b` to the right of `a`.
inline Var concat_cols(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  if (a.rows() != b.rows()) throw Error(ErrorKind::DimensionMismatch, "concat_cols: heights differ");
  const std::size_t ca = a.cols(), cb = b.cols();
  Matrix out(a.rows(), ca + cb);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < ca; ++j) out(i, j) = a.value()(i, j);
    for (std::size_t j = 0; j < cb; ++j) out(i, ca + j) = b.value()(i, j);
  }
  return t.push(std::move(out), [a = a.id, b = b.id, ca, cb](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    Matrix ga(g.rows(), ca), gb(g.rows(), cb);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      for (std::size_t j = 0; j < ca; ++j) ga(i, j) = g(i, j);
      for (std::size_t j = 0; j < cb; ++j) gb(i, j) = g(i, ca + j);
    }
    tp.accumulate(a, ga);
    tp.accumulate(b, gb);
  });
}

inline Var slice_rows(Var a, std::size_t first, std::size_t count) {
  if (first + count > a.rows()) throw Error(ErrorKind::IndexOutOfRange, "slice_rows out of range");
  const std::size_t c = a.cols();
  const auto& src = a.value().values();
  Matrix out(count, c, std::vector<double>(src.begin() + first * c, src.begin() + (first + count) * c));
  return a.tape->push(std::move(out), [a = a.id, first](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    Matrix ga(tp.value(a).rows(), g.cols());
    std::copy(g.values().begin(), g.values().end(), ga.values().begin() + first * g.cols());
    tp.accumulate(a, ga);
  });
}

inline Var slice_cols(Var a, std::size_t first, std::size_t count) {
  if (first + count > a.cols()) throw Error(ErrorKind::IndexOutOfRange, "slice_cols out of range");
  Matrix out(a.rows(), count);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = a.value()(i, first + j);
  return a.tape->push(std::move(out), [a = a.id, first](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    Matrix ga(tp.value(a).rows(), tp.value(a).cols());
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) ga(i, first + j) = g(i, j);
    tp.accumulate(a, ga);
  });
}

/// Single entry as a 1×1 node.
inline Var pick(Var a, std::size_t r, std::size_t c) {
  if (r >= a.rows() || c >= a.cols()) throw Error(ErrorKind::IndexOutOfRange, "pick out of range");
  return a.tape->push(Matrix(1, 1, a.value()(r, c)), [a = a.id, r, c](Tape& tp, std::size_t self) {
    Matrix ga(tp.value(a).rows(), tp.value(a).cols());
    ga(r, c) = tp.grad(self)(0, 0);
    tp.accumulate(a, ga);
  });
}

/// Elementwise x·log(x) with 0·log 0 := 0 (and zero gradient there).
inline Var xlogx(Var a) {
  Matrix out = a.value();
  for (auto& v : out.values()) v = v > 0.0 ? v * std::log(v) : 0.0;
  return a.tape->push(std::move(out), [a = a.id](Tape& tp, std::size_t self) {
    Matrix g = tp.grad(self);
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double x = tp.value(a)[k];
      g[k] = x > 0.0 ? g[k] * (std::log(x) + 1.0) : 0.0;
    }
    tp.accumulate(a, g);
  });
}

/// Cosine similarity of two 1×d rows, as a 1×1 node.
inline Var cosine(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  detail::require_same_shape(a.value(), b.value(), "cosine");
  const auto& x = a.value().values();
  const auto& y = b.value().values();
  const double nx = norm(x), ny = norm(y);
  if (nx < kMinNorm || ny < kMinNorm) throw Error(ErrorKind::ZeroVector, "cosine of a zero-norm vector");
  const double c = dot(x, y) / (nx * ny);
  return t.push(Matrix(1, 1, c), [a = a.id, b = b.id, nx, ny, c](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)(0, 0);
    const Matrix& x = tp.value(a);
    const Matrix& y = tp.value(b);
    Matrix ga(x.rows(), x.cols()), gb(y.rows(), y.cols());
    // d cos / dx = y/(|x||y|) - cos * x/|x|^2
    for (std::size_t k = 0; k < x.size(); ++k) {
      ga[k] = g * (y[k] / (nx * ny) - c * x[k] / (nx * nx));
      gb[k] = g * (x[k] / (nx * ny) - c * y[k] / (ny * ny));
    }
    tp.accumulate(a, ga);
    tp.accumulate(b, gb);
  });
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(double c, Var a) { return scale(a, c); }

}  // namespace ad
}  // namespace macvqa
