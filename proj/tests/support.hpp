#pragma once

#include <gtest/gtest.h>

#include "macvqa/linalg.hpp"
#include "oracles.hpp"

namespace support {

inline macvqa::Matrix to_matrix(const oracle::Mat& m) {
  macvqa::Matrix out(m.size(), m[0].size());
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[0].size(); ++j) out(i, j) = m[i][j];
  return out;
}

inline oracle::Mat to_mat(const macvqa::Matrix& m) {
  oracle::Mat out(m.rows(), oracle::Vec(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  return out;
}

inline macvqa::Vector to_vector(const oracle::Vec& v) {
  macvqa::Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i];
  return out;
}

inline void expect_near(const macvqa::Matrix& got, const oracle::Mat& want, double tol) {
  ASSERT_EQ(got.rows(), want.size());
  ASSERT_EQ(got.cols(), want[0].size());
  for (std::size_t i = 0; i < got.rows(); ++i)
    for (std::size_t j = 0; j < got.cols(); ++j) EXPECT_NEAR(got(i, j), want[i][j], tol) << "at " << i << "," << j;
}

inline void expect_near(const macvqa::Vector& got, const oracle::Vec& want, double tol) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], tol) << "at " << i;
}

#define EXPECT_THROW_KIND(stmt, k)                                 \
  do {                                                             \
    try {                                                          \
      stmt;                                                        \
      ADD_FAILURE() << "expected " #k;                             \
    } catch (const macvqa::Error& e) {                             \
      EXPECT_EQ(e.kind(), macvqa::ErrorKind::k) << e.what();       \
    }                                                              \
  } while (0)

}  // namespace support
