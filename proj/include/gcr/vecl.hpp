#pragma once

#include <Eigen/Dense>

#include "gcr/error.hpp"

namespace gcr {

// vecl stacks the strictly lower triangle column by column:
//   (1,0), (2,0), ..., (m-1,0), (2,1), (3,1), ..., (m-1,m-2).
// A pair (j,k) always has j > k.  This ordering is fixed project-wide; the
// rows of every pair-covariate matrix W follow it as well.

inline int vecl_size(int m) { return m * (m - 1) / 2; }

inline int vecl_index(int j, int k, int m) {
  return k * (2 * m - k - 1) / 2 + (j - k - 1);
}

// Recovers m from a vecl length, rejecting non-triangular lengths.
inline int vecl_dim(Eigen::Index len) {
  if (len < 0) fail_data("vecl length must be nonnegative");
  if (len == 0) return 1;
  int m = static_cast<int>((1.0 + std::sqrt(1.0 + 8.0 * static_cast<double>(len))) / 2.0);
  for (int cand = m - 1; cand <= m + 1; ++cand) {
    if (cand >= 1 && static_cast<Eigen::Index>(vecl_size(cand)) == len) return cand;
  }
  fail_data("vector of length " + std::to_string(len) +
            " is not a vecl of any square matrix");
}

template <class F>
inline void for_each_pair(int m, F&& f) {
  int idx = 0;
  for (int k = 0; k < m; ++k)
    for (int j = k + 1; j < m; ++j) f(j, k, idx++);
}

inline Eigen::VectorXd vecl(const Eigen::MatrixXd& a) {
  const int m = static_cast<int>(a.rows());
  Eigen::VectorXd v(vecl_size(m));
  for_each_pair(m, [&](int j, int k, int idx) { v[idx] = a(j, k); });
  return v;
}

// Symmetric embedding of a vecl vector with zero diagonal.
inline Eigen::MatrixXd unvecl_sym(const Eigen::VectorXd& v, int m) {
  if (v.size() != vecl_size(m))
    fail_data("vecl length " + std::to_string(v.size()) +
              " does not match dimension " + std::to_string(m));
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, m);
  for_each_pair(m, [&](int j, int k, int idx) {
    a(j, k) = v[idx];
    a(k, j) = v[idx];
  });
  return a;
}

}  // namespace gcr
