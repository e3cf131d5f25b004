#pragma once

// Independent reference implementations used as test oracles. These must stay
// decoupled from the library code paths they are checking.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <vector>

#include "cellgan/tensor.hpp"

namespace oracles {

using cellgan::ad::Shape;
using cellgan::ad::TensorT;

// Central-difference gradient estimate (f(x+h e_i) - f(x-h e_i)) / 2h.
template <typename F>
TensorT<double> finite_difference_grad(F f, const TensorT<double>& x, double h) {
  TensorT<double> g = TensorT<double>::zeros(x.shape);
  TensorT<double> xp = x;
  for (size_t i = 0; i < x.v.size(); ++i) {
    const double orig = xp.v[i];
    xp.v[i] = orig + h;
    const double fp = f(xp);
    xp.v[i] = orig - h;
    const double fm = f(xp);
    xp.v[i] = orig;
    g.v[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline double rel_err(const TensorT<double>& a, const TensorT<double>& b) {
  double scale = 1.0, diff = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i) {
    scale = std::max({scale, std::fabs(a.v[i]), std::fabs(b.v[i])});
    diff = std::max(diff, std::fabs(a.v[i] - b.v[i]));
  }
  return diff / scale;
}

// Brute-force 4-connected components by flood fill; labels in scan order.
inline std::vector<int> flood_fill_labels(const std::vector<uint8_t>& mask, int w, int h) {
  std::vector<int> labels((size_t)w * h, 0);
  int next = 1;
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask[(size_t)y * w + x] || labels[(size_t)y * w + x]) continue;
      stack.push_back({x, y});
      labels[(size_t)y * w + x] = next;
      while (!stack.empty()) {
        auto [cx, cy] = stack.back();
        stack.pop_back();
        const int dx[4] = {1, -1, 0, 0};
        const int dy[4] = {0, 0, 1, -1};
        for (int d = 0; d < 4; ++d) {
          int nx = cx + dx[d], ny = cy + dy[d];
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          size_t idx = (size_t)ny * w + nx;
          if (mask[idx] && !labels[idx]) {
            labels[idx] = next;
            stack.push_back({nx, ny});
          }
        }
      }
      ++next;
    }
  }
  return labels;
}

// Reference purity: (1/N) sum_k max_j n[k][j].
inline double ref_purity(const std::vector<std::vector<long>>& table) {
  long n = 0, s = 0;
  for (const auto& row : table) {
    long m = 0;
    for (long v : row) {
      m = std::max(m, v);
      n += v;
    }
    s += m;
  }
  return n ? (double)s / (double)n : 0.0;
}

// Reference cluster-size entropy: -(1/N) sum_k |w_k| ln(|w_k|/N).
inline double ref_cluster_entropy(const std::vector<std::vector<long>>& table) {
  long n = 0;
  std::vector<long> sizes;
  for (const auto& row : table) {
    long s = 0;
    for (long v : row) s += v;
    sizes.push_back(s);
    n += s;
  }
  double e = 0.0;
  for (long s : sizes)
    if (s > 0) e -= (double)s * std::log((double)s / (double)n);
  return n ? e / (double)n : 0.0;
}

// Reference support-weighted precision/recall/F over integer label pairs.
struct Prf {
  double precision = 0, recall = 0, fscore = 0;
};
inline Prf ref_weighted_prf(const std::vector<int>& truth, const std::vector<int>& pred) {
  std::set<int> classes(truth.begin(), truth.end());
  double wp = 0, wr = 0, wf = 0;
  long total = (long)truth.size();
  for (int c : classes) {
    long tp = 0, fp = 0, fn = 0, support = 0;
    for (size_t i = 0; i < truth.size(); ++i) {
      if (truth[i] == c) {
        ++support;
        if (pred[i] == c) ++tp;
        else ++fn;
      } else if (pred[i] == c) {
        ++fp;
      }
    }
    double p = (tp + fp) ? (double)tp / (tp + fp) : 0.0;
    double r = (tp + fn) ? (double)tp / (tp + fn) : 0.0;
    double f = (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
    wp += p * support;
    wr += r * support;
    wf += f * support;
  }
  return {wp / total, wr / total, wf / total};
}

// Reference cluster-to-class F: each cluster votes for its argmax class.
inline double ref_cluster_fscore(const std::vector<std::vector<long>>& table) {
  std::vector<int> truth, pred;
  for (size_t k = 0; k < table.size(); ++k) {
    size_t best = 0;
    for (size_t j = 1; j < table[k].size(); ++j)
      if (table[k][j] > table[k][best]) best = j;
    for (size_t j = 0; j < table[k].size(); ++j)
      for (long i = 0; i < table[k][j]; ++i) {
        truth.push_back((int)j);
        pred.push_back((int)best);
      }
  }
  if (truth.empty()) return 0.0;
  return ref_weighted_prf(truth, pred).fscore;
}

}  // namespace oracles
