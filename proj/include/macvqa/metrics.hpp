#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "macvqa/error.hpp"

namespace macvqa {

/// Lower-triangular record: at(l, j) is the accuracy on task j after training
/// through task l (0-based, j <= l). Each entry may be written once.
class AccuracyMatrix {
 public:
  AccuracyMatrix() = default;
  explicit AccuracyMatrix(std::size_t tasks) : tasks_(tasks), cells_(tasks * tasks) {}

  std::size_t tasks() const noexcept { return tasks_; }

  void set(std::size_t l, std::size_t j, double acc) {
    check(l, j);
    if (!(acc >= 0.0 && acc <= 1.0)) throw Error(ErrorKind::IndexOutOfRange, "accuracy must lie in [0,1]");
    auto& c = cells_[l * tasks_ + j];
    if (c) throw Error(ErrorKind::IndexOutOfRange, "accuracy entry already written");
    c = acc;
  }

  std::optional<double> at(std::size_t l, std::size_t j) const {
    check(l, j);
    return cells_[l * tasks_ + j];
  }

  bool row_complete(std::size_t l) const {
    for (std::size_t j = 0; j <= l; ++j)
      if (!cells_[l * tasks_ + j]) return false;
    return true;
  }

  bool complete() const {
    for (std::size_t l = 0; l < tasks_; ++l)
      if (!row_complete(l)) return false;
    return true;
  }

  /// Dense rows with nullopt above the diagonal.
  std::vector<std::vector<std::optional<double>>> rows() const {
    std::vector<std::vector<std::optional<double>>> out(tasks_);
    for (std::size_t l = 0; l < tasks_; ++l)
      for (std::size_t j = 0; j < tasks_; ++j) out[l].push_back(j <= l ? cells_[l * tasks_ + j] : std::nullopt);
    return out;
  }

  /// Builds a matrix from dense rows; entries above the diagonal are ignored.
  static AccuracyMatrix from_rows(const std::vector<std::vector<double>>& rows) {
    AccuracyMatrix m(rows.size());
    for (std::size_t l = 0; l < rows.size(); ++l)
      for (std::size_t j = 0; j <= l && j < rows[l].size(); ++j) m.set(l, j, rows[l][j]);
    return m;
  }

 private:
  void check(std::size_t l, std::size_t j) const {
    if (l >= tasks_ || j > l) throw Error(ErrorKind::IndexOutOfRange, "accuracy index outside lower triangle");
  }

  std::size_t tasks_ = 0;
  std::vector<std::optional<double>> cells_;
};

/// Mean accuracy over all tasks after the final task.
inline double compute_ap(const AccuracyMatrix& m) {
  if (m.tasks() == 0 || !m.row_complete(m.tasks() - 1))
    throw Error(ErrorKind::IncompleteMatrix, "final row of the accuracy matrix is incomplete");
  const std::size_t last = m.tasks() - 1;
  double s = 0.0;
  for (std::size_t j = 0; j <= last; ++j) s += *m.at(last, j);
  return s / static_cast<double>(m.tasks());
}

/// Mean over earlier tasks of (best accuracy before the final task − final accuracy).
inline double compute_af(const AccuracyMatrix& m) {
  if (m.tasks() < 2) throw Error(ErrorKind::SingleTask, "forgetting needs at least two tasks");
  if (!m.complete()) throw Error(ErrorKind::IncompleteMatrix, "accuracy matrix is incomplete");
  const std::size_t last = m.tasks() - 1;
  double s = 0.0;
  for (std::size_t j = 0; j < last; ++j) {
    double best = *m.at(j, j);
    for (std::size_t l = j + 1; l < last; ++l) best = std::max(best, *m.at(l, j));
    s += best - *m.at(last, j);
  }
  return s / static_cast<double>(last);
}

}  // namespace macvqa
