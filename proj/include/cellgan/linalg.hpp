#pragma once

#include <cmath>
#include <vector>

#include "cellgan/common.hpp"

namespace cellgan::linalg {

// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major n x n).
// Returns eigenvalues in descending order with matching unit eigenvectors as
// rows of `vectors`. Deterministic; plenty for the 3x3 and KxK problems here.
inline void jacobi_eigen_sym(int n, std::vector<double> a, std::vector<double>& values,
                             std::vector<double>& vectors) {
  std::vector<double> v((size_t)n * n, 0.0);
  for (int i = 0; i < n; ++i) v[(size_t)i * n + i] = 1.0;

  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a[(size_t)p * n + q] * a[(size_t)p * n + q];
    if (off < 1e-24) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a[(size_t)p * n + q];
        if (std::fabs(apq) < 1e-18) continue;
        const double app = a[(size_t)p * n + p];
        const double aqq = a[(size_t)q * n + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a[(size_t)k * n + p];
          const double akq = a[(size_t)k * n + q];
          a[(size_t)k * n + p] = c * akp - s * akq;
          a[(size_t)k * n + q] = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a[(size_t)p * n + k];
          const double aqk = a[(size_t)q * n + k];
          a[(size_t)p * n + k] = c * apk - s * aqk;
          a[(size_t)q * n + k] = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v[(size_t)k * n + p];
          const double vkq = v[(size_t)k * n + q];
          v[(size_t)k * n + p] = c * vkp - s * vkq;
          v[(size_t)k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[(size_t)i] = i;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (a[(size_t)order[(size_t)j] * n + order[(size_t)j]] >
          a[(size_t)order[(size_t)i] * n + order[(size_t)i]])
        std::swap(order[(size_t)i], order[(size_t)j]);

  values.resize((size_t)n);
  vectors.assign((size_t)n * n, 0.0);
  for (int i = 0; i < n; ++i) {
    const int src = order[(size_t)i];
    values[(size_t)i] = a[(size_t)src * n + src];
    for (int k = 0; k < n; ++k) vectors[(size_t)i * n + k] = v[(size_t)k * n + src];
  }
}

}  // namespace cellgan::linalg
