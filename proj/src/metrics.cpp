#include "egokd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "egokd/errors.hpp"

namespace egokd {

double top_k_accuracy(const std::vector<std::vector<double>>& scores,
                      const std::vector<int>& labels, int k) {
  if (scores.empty()) throw DataError("top_k_accuracy: empty input");
  if (scores.size() != labels.size()) throw DataError("top_k_accuracy: size mismatch");
  const int classes = static_cast<int>(scores.front().size());
  if (k < 1 || k > classes) throw UsageError("top_k_accuracy: k must be in [1, classes]");

  int hits = 0;
  for (size_t n = 0; n < scores.size(); ++n) {
    const auto& s = scores[n];
    if (static_cast<int>(s.size()) != classes) throw DataError("top_k_accuracy: ragged scores");
    const int label = labels[n];
    if (label < 0 || label >= classes) throw DataError("top_k_accuracy: label out of range");
    int rank = 0;  // number of classes ranked strictly above the label
    for (int c = 0; c < classes; ++c) {
      if (s[c] > s[label] || (s[c] == s[label] && c < label)) ++rank;
    }
    if (rank < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

EvalResult mean_average_precision(const std::vector<std::vector<double>>& scores,
                                  const std::vector<std::vector<float>>& label_sets) {
  if (scores.empty()) throw DataError("mean_average_precision: empty input");
  if (scores.size() != label_sets.size())
    throw DataError("mean_average_precision: size mismatch");
  const size_t n = scores.size();
  const size_t classes = scores.front().size();
  for (size_t i = 0; i < n; ++i) {
    if (scores[i].size() != classes || label_sets[i].size() != classes)
      throw DataError("mean_average_precision: ragged input");
  }

  EvalResult result;
  result.metric = "map";
  result.n_items = static_cast<int>(n);
  result.has_per_class = true;
  result.per_class.assign(classes, std::numeric_limits<double>::quiet_NaN());

  std::vector<size_t> order(n);
  double sum = 0.0;
  int included = 0;
  for (size_t c = 0; c < classes; ++c) {
    size_t positives = 0;
    for (size_t i = 0; i < n; ++i) {
      if (label_sets[i][c] > 0.5f) ++positives;
    }
    if (positives == 0) continue;  // classes without positives are excluded

    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      if (scores[a][c] != scores[b][c]) return scores[a][c] > scores[b][c];
      return a < b;
    });
    double ap = 0.0;
    size_t tp = 0;
    for (size_t rank = 0; rank < n; ++rank) {
      if (label_sets[order[rank]][c] > 0.5f) {
        ++tp;
        ap += static_cast<double>(tp) / static_cast<double>(rank + 1);
      }
    }
    ap /= static_cast<double>(positives);
    result.per_class[c] = ap;
    sum += ap;
    ++included;
  }
  if (included == 0) throw DataError("mean_average_precision: no class has positives");
  result.value = sum / included;
  return result;
}

}  // namespace egokd
