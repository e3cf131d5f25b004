#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cellgan/segmentation.hpp"

namespace cellgan::metrics {

struct PrfScores {
  double precision = 0;
  double recall = 0;
  double fscore = 0;
};

// Support-weighted multi-class precision/recall/F. A class nobody predicts
// gets precision 0; zero denominators yield 0 throughout.
PrfScores weighted_prf(const std::vector<int>& truth, const std::vector<int>& predicted);

// Contingency table n[k][j] = |cluster_k intersect class_j|.
struct ContingencyTable {
  std::vector<std::vector<int64_t>> n;
  int64_t total = 0;

  static ContingencyTable from_labels(const std::vector<int>& clusters,
                                      const std::vector<int>& classes, int K, int J);
};

double purity(const ContingencyTable& table);

// Exactly the printed formula: -(1/N) sum_k |w_k| ln(|w_k|/N). This measures
// cluster-size dispersion, not class mixing.
double cluster_entropy(const ContingencyTable& table);

// The conventional conditional class entropy H(class|cluster), provided
// separately under its own name.
double conditional_entropy(const ContingencyTable& table);

// Each cluster is assigned to its majority class (lowest index on ties); the
// induced labeling is scored with weighted_prf.
double cluster_fscore(const ContingencyTable& table);

struct SegMatch {
  struct Pair {
    int pred_label = 0;
    int truth_label = 0;
    int64_t overlap = 0;
    double iou = 0;
  };
  std::vector<Pair> pairs;
  std::vector<int> unmatched_pred;
  std::vector<int> unmatched_truth;
  int64_t tp = 0, fp = 0, fn = 0;  // pixel counts
  double mean_iou = 0;
  PrfScores prf;
};

// Greedy instance matching by descending overlap; a prediction matches a
// ground-truth object only when |I cap G| > 0.5 |G|, each side used once.
SegMatch iou_match(const seg::LabelImage& pred, const seg::LabelImage& truth);

}  // namespace cellgan::metrics
