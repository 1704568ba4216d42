#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cvar::eval {

// Row-major n x classes score matrix.
struct ScoreMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  ScoreMatrix() = default;
  ScoreMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

// Fraction of rows whose label is among the k largest scores. Ties go to the
// lower class index.
double topk_accuracy(const ScoreMatrix& scores, std::span<const int> labels, int k);

struct ApResult {
  double map = 0;
  std::vector<double> per_class;  // NaN for excluded classes
  std::vector<int> excluded;      // classes without positives
};

// Per-class AP as the mean precision at each positive's rank, without
// interpolation. Score ties rank negatives first, so the result does not
// depend on sample order. `positives` holds 0/1 entries.
ApResult mean_average_precision(const ScoreMatrix& scores, const ScoreMatrix& positives);

// One-hot positives for single-label data.
ScoreMatrix one_hot(std::span<const int> labels, std::size_t classes);

}  // namespace cvar::eval
