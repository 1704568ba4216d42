#pragma once

#include <cstddef>
#include <vector>

#include "cvar/loss/metrics.hpp"

namespace cvar::loss {

// One exo clip, its paired ego clip and an unrelated ego clip, with their
// attention maps per checked layer.
struct BoundTriple {
  const synth::VideoClip* exo = nullptr;
  const synth::VideoClip* ego_paired = nullptr;
  const synth::VideoClip* ego_other = nullptr;
  std::vector<std::vector<double>> a_exo, a_paired, a_other;  // [layer][cell]
};

struct BoundReport {
  std::size_t triples = 0;
  std::size_t checks = 0;            // triples x layers
  std::size_t violations = 0;        // clamped form with the (1 + alpha) beta allowance
  std::size_t triangle_violations = 0;  // same inequality with the exact triangle terms
  double min_slack = 0;
  double mean_slack = 0;
  double max_slack = 0;
  // Slack of the clamped form, binned evenly over [0, 2 (1 + alpha) beta].
  std::vector<std::size_t> histogram;
  double histogram_hi = 0;
};

// Root-l2 metrics clamped at beta: sqrt of the pixel mean square or the plain
// embedding distance for D_x, plain Euclidean distance between maps for D_a.
double root_dx(const synth::VideoClip& a, const synth::VideoClip& b, const LossConfig& cfg,
               const EmbedNet* embed);
double root_dx(const std::vector<double>& ga, const std::vector<double>& gb, const LossConfig& cfg);
double root_da(const std::vector<double>& a, const std::vector<double>& b, const LossConfig& cfg);

BoundReport verify_bound(const std::vector<BoundTriple>& triples, const LossConfig& cfg,
                         const EmbedNet* embed = nullptr, std::size_t bins = 10);

}  // namespace cvar::loss
