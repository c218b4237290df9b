#pragma once

#include <string>
#include <vector>

namespace egokd {

struct EvalResult {
  std::string metric;
  double value = 0.0;
  std::vector<double> per_class;  // NaN marks classes excluded from the mean
  bool has_per_class = false;
  int n_items = 0;
};

// Fraction of items whose label ranks among the k best scores. Ties rank
// the lower class index first.
double top_k_accuracy(const std::vector<std::vector<double>>& scores,
                      const std::vector<int>& labels, int k);

// All-points average precision per class (descending scores, ties broken by
// item index), averaged over classes that have at least one positive.
EvalResult mean_average_precision(const std::vector<std::vector<double>>& scores,
                                  const std::vector<std::vector<float>>& label_sets);

}  // namespace egokd
