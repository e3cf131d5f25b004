#include "cellgan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace cellgan::metrics {

PrfScores weighted_prf(const std::vector<int>& truth, const std::vector<int>& predicted) {
  if (truth.empty() || truth.size() != predicted.size())
    throw DataError("weighted_prf: label sequences must be non-empty and equal length");
  std::set<int> classes(truth.begin(), truth.end());
  const double total = (double)truth.size();
  PrfScores out;
  for (int c : classes) {
    int64_t tp = 0, fp = 0, fn = 0, support = 0;
    for (size_t i = 0; i < truth.size(); ++i) {
      if (truth[i] == c) {
        ++support;
        if (predicted[i] == c) ++tp;
        else ++fn;
      } else if (predicted[i] == c) {
        ++fp;
      }
    }
    const double p = (tp + fp) > 0 ? (double)tp / (double)(tp + fp) : 0.0;
    const double r = (tp + fn) > 0 ? (double)tp / (double)(tp + fn) : 0.0;
    const double f = (p + r) > 0 ? 2.0 * p * r / (p + r) : 0.0;
    out.precision += p * (double)support;
    out.recall += r * (double)support;
    out.fscore += f * (double)support;
  }
  out.precision /= total;
  out.recall /= total;
  out.fscore /= total;
  return out;
}

ContingencyTable ContingencyTable::from_labels(const std::vector<int>& clusters,
                                               const std::vector<int>& classes, int K, int J) {
  if (clusters.size() != classes.size())
    throw DataError("contingency: label sequences differ in length");
  ContingencyTable t;
  t.n.assign((size_t)K, std::vector<int64_t>((size_t)J, 0));
  for (size_t i = 0; i < clusters.size(); ++i) {
    if (clusters[i] < 0 || clusters[i] >= K || classes[i] < 0 || classes[i] >= J)
      throw DataError("contingency: label out of range");
    ++t.n[(size_t)clusters[i]][(size_t)classes[i]];
    ++t.total;
  }
  return t;
}

double purity(const ContingencyTable& table) {
  if (table.total <= 0) throw DataError("purity: empty table");
  int64_t s = 0;
  for (const auto& row : table.n) {
    int64_t m = 0;
    for (int64_t v : row) m = std::max(m, v);
    s += m;
  }
  return (double)s / (double)table.total;
}

double cluster_entropy(const ContingencyTable& table) {
  if (table.total <= 0) throw DataError("cluster_entropy: empty table");
  double e = 0;
  for (const auto& row : table.n) {
    int64_t size = 0;
    for (int64_t v : row) size += v;
    if (size > 0) e -= (double)size * std::log((double)size / (double)table.total);
  }
  return e / (double)table.total;
}

double conditional_entropy(const ContingencyTable& table) {
  if (table.total <= 0) throw DataError("conditional_entropy: empty table");
  double e = 0;
  for (const auto& row : table.n) {
    int64_t size = 0;
    for (int64_t v : row) size += v;
    if (!size) continue;
    for (int64_t v : row)
      if (v > 0) e -= (double)v * std::log((double)v / (double)size);
  }
  return e / (double)table.total;
}

double cluster_fscore(const ContingencyTable& table) {
  if (table.total <= 0) throw DataError("cluster_fscore: empty table");
  std::vector<int> truth, pred;
  truth.reserve((size_t)table.total);
  pred.reserve((size_t)table.total);
  for (const auto& row : table.n) {
    size_t best = 0;
    for (size_t j = 1; j < row.size(); ++j)
      if (row[j] > row[best]) best = j;  // lowest index wins ties
    for (size_t j = 0; j < row.size(); ++j)
      for (int64_t i = 0; i < row[j]; ++i) {
        truth.push_back((int)j);
        pred.push_back((int)best);
      }
  }
  return weighted_prf(truth, pred).fscore;
}

SegMatch iou_match(const seg::LabelImage& pred, const seg::LabelImage& truth) {
  if (pred.width != truth.width || pred.height != truth.height)
    throw ShapeError("iou_match: label images differ in size");

  std::vector<int64_t> pred_area((size_t)pred.max_label + 1, 0);
  std::vector<int64_t> truth_area((size_t)truth.max_label + 1, 0);
  std::map<std::pair<int, int>, int64_t> overlap;
  for (size_t i = 0; i < pred.labels.size(); ++i) {
    const int pl = pred.labels[i];
    const int tl = truth.labels[i];
    if (pl) ++pred_area[(size_t)pl];
    if (tl) ++truth_area[(size_t)tl];
    if (pl && tl) ++overlap[{pl, tl}];
  }

  // candidates obeying the 50% rule, ordered by descending overlap
  struct Cand {
    int64_t ov;
    int pl, tl;
  };
  std::vector<Cand> cands;
  for (const auto& [key, ov] : overlap)
    if (2 * ov > truth_area[(size_t)key.second]) cands.push_back({ov, key.first, key.second});
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.ov != b.ov) return a.ov > b.ov;
    if (a.pl != b.pl) return a.pl < b.pl;
    return a.tl < b.tl;
  });

  SegMatch m;
  std::vector<uint8_t> pred_used((size_t)pred.max_label + 1, 0);
  std::vector<uint8_t> truth_used((size_t)truth.max_label + 1, 0);
  for (const auto& c : cands) {
    if (pred_used[(size_t)c.pl] || truth_used[(size_t)c.tl]) continue;
    pred_used[(size_t)c.pl] = 1;
    truth_used[(size_t)c.tl] = 1;
    SegMatch::Pair pr;
    pr.pred_label = c.pl;
    pr.truth_label = c.tl;
    pr.overlap = c.ov;
    const int64_t uni = pred_area[(size_t)c.pl] + truth_area[(size_t)c.tl] - c.ov;
    pr.iou = uni > 0 ? (double)c.ov / (double)uni : 0.0;
    m.tp += c.ov;
    m.fp += pred_area[(size_t)c.pl] - c.ov;
    m.fn += truth_area[(size_t)c.tl] - c.ov;
    m.pairs.push_back(pr);
  }
  for (int l = 1; l <= pred.max_label; ++l)
    if (!pred_used[(size_t)l] && pred_area[(size_t)l] > 0) {
      m.unmatched_pred.push_back(l);
      m.fp += pred_area[(size_t)l];
    }
  for (int l = 1; l <= truth.max_label; ++l)
    if (!truth_used[(size_t)l] && truth_area[(size_t)l] > 0) {
      m.unmatched_truth.push_back(l);
      m.fn += truth_area[(size_t)l];
    }

  double iou_sum = 0;
  for (const auto& p : m.pairs) iou_sum += p.iou;
  m.mean_iou = m.pairs.empty() ? 0.0 : iou_sum / (double)m.pairs.size();
  const double p = (m.tp + m.fp) > 0 ? (double)m.tp / (double)(m.tp + m.fp) : 0.0;
  const double r = (m.tp + m.fn) > 0 ? (double)m.tp / (double)(m.tp + m.fn) : 0.0;
  m.prf.precision = p;
  m.prf.recall = r;
  m.prf.fscore = (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
  return m;
}

}  // namespace cellgan::metrics
