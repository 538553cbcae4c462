#pragma once

// Naive reference implementations used as independent oracles in tests.
// Plain loops over std::vector, no library code.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat c(a.size(), Vec(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b[0].size(); ++j)
      for (std::size_t k = 0; k < b.size(); ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline Mat transpose(const Mat& a) {
  Mat t(a[0].size(), Vec(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[0].size(); ++j) t[j][i] = a[i][j];
  return t;
}

inline Vec softmax(const Vec& x) {
  Vec e(x.size());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (e[i] = std::exp(x[i]));
  for (auto& v : e) v /= s;
  return e;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double cosine(const Vec& a, const Vec& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

inline Vec matvec(const Mat& w, const Vec& x) {
  Vec y(w.size(), 0.0);
  for (std::size_t i = 0; i < w.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j) y[i] += w[i][j] * x[j];
  return y;
}

/// softmax(Q Kᵀ / sqrt(d_k)) V, row by row.
inline Mat attention(const Mat& q, const Mat& k, const Mat& v) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(k[0].size()));
  Mat out;
  for (const auto& qi : q) {
    Vec logits;
    for (const auto& kj : k) {
      double s = 0.0;
      for (std::size_t c = 0; c < qi.size(); ++c) s += qi[c] * kj[c];
      logits.push_back(s * scale);
    }
    const Vec w = softmax(logits);
    Vec row(v[0].size(), 0.0);
    for (std::size_t j = 0; j < v.size(); ++j)
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += w[j] * v[j][c];
    out.push_back(row);
  }
  return out;
}

/// Indices of the k largest scores, ties to the lower index, via full sort.
inline std::vector<std::size_t> topk(const Vec& scores, std::size_t k) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  idx.resize(k);
  return idx;
}

/// a[l][j] for j <= l; AP = mean of the last row.
inline double ap(const Mat& a) {
  const auto& last = a.back();
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += last[j];
  return s / static_cast<double>(a.size());
}

/// AF = mean over j < T-1 of max_{l in [j, T-2]} a[l][j] - a[T-1][j].
inline double af(const Mat& a) {
  const std::size_t t = a.size();
  double s = 0.0;
  for (std::size_t j = 0; j + 1 < t; ++j) {
    double best = -1e300;
    for (std::size_t l = j; l + 1 < t; ++l) best = std::max(best, a[l][j]);
    s += best - a[t - 1][j];
  }
  return s / static_cast<double>(t - 1);
}

inline Mat random_mat(std::size_t r, std::size_t c, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  Mat m(r, Vec(c));
  for (auto& row : m)
    for (auto& x : row) x = g(rng);
  return m;
}

inline Vec random_vec(std::size_t n, std::mt19937_64& rng, double sd = 1.0) { return random_mat(1, n, rng, sd)[0]; }

}  // namespace oracle
