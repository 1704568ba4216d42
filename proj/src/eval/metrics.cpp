#include "cvar/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "cvar/common/error.hpp"

namespace cvar::eval {

double topk_accuracy(const ScoreMatrix& scores, std::span<const int> labels, int k) {
  if (labels.size() != scores.rows) throw ShapeError("topk_accuracy: label count does not match score rows");
  if (scores.rows == 0) throw ShapeError("topk_accuracy: empty batch");
  if (k < 1 || static_cast<std::size_t>(k) > scores.cols)
    throw ConfigError("topk_accuracy: k=" + std::to_string(k) + " outside [1, " + std::to_string(scores.cols) + "]");
  std::size_t hits = 0;
  for (std::size_t r = 0; r < scores.rows; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= scores.cols)
      throw ShapeError("topk_accuracy: label " + std::to_string(y) + " out of range");
    const auto s = scores.row(r);
    std::size_t ahead = 0;
    for (std::size_t j = 0; j < s.size(); ++j)
      if (s[j] > s[y] || (s[j] == s[y] && j < static_cast<std::size_t>(y))) ++ahead;
    if (ahead < static_cast<std::size_t>(k)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(scores.rows);
}

ApResult mean_average_precision(const ScoreMatrix& scores, const ScoreMatrix& positives) {
  if (scores.rows != positives.rows || scores.cols != positives.cols)
    throw ShapeError("mean_average_precision: score and label matrices differ in shape");
  ApResult out;
  out.per_class.assign(scores.cols, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::size_t> order(scores.rows);
  double sum = 0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < scores.cols; ++c) {
    std::size_t npos = 0;
    for (std::size_t r = 0; r < scores.rows; ++r) {
      const double v = positives.at(r, c);
      if (v != 0.0 && v != 1.0) throw ShapeError("mean_average_precision: labels must be 0 or 1");
      npos += v == 1.0;
    }
    if (npos == 0) {
      out.excluded.push_back(static_cast<int>(c));
      continue;
    }
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double sa = scores.at(a, c), sb = scores.at(b, c);
      if (sa != sb) return sa > sb;
      return positives.at(a, c) < positives.at(b, c);
    });
    double ap = 0;
    std::size_t seen = 0;
    for (std::size_t rank = 0; rank < order.size(); ++rank)
      if (positives.at(order[rank], c) == 1.0) ap += static_cast<double>(++seen) / static_cast<double>(rank + 1);
    out.per_class[c] = ap / static_cast<double>(npos);
    sum += out.per_class[c];
    ++used;
  }
  if (used == 0) throw ShapeError("mean_average_precision: label matrix has no positives");
  out.map = sum / static_cast<double>(used);
  return out;
}

ScoreMatrix one_hot(std::span<const int> labels, std::size_t classes) {
  ScoreMatrix m(labels.size(), classes);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= classes)
      throw ShapeError("one_hot: label " + std::to_string(labels[r]) + " out of range");
    m.at(r, labels[r]) = 1.0;
  }
  return m;
}

}  // namespace cvar::eval
