#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "cvar/numerics/tensor.hpp"

namespace cvar::num {

// Largest |analytic - central| / (|analytic| + |central| + 1e-12) over the
// coordinates of x. f must be deterministic; throws NumericError when f(x)
// is not finite.
double finite_diff_check(const std::function<TensorD(const TensorD&)>& f, const TensorD& x,
                         double h = 1e-5);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Same check over a set of parameter leaves read by `loss`. The leaves are
// perturbed in place and restored. At most `max_coords_per_tensor`
// coordinates are sampled from each tensor (0 = all of them).
GradCheckReport finite_diff_check_params(const std::function<TensorD()>& loss,
                                         std::vector<TensorD> params, double h = 1e-5,
                                         std::size_t max_coords_per_tensor = 0,
                                         std::uint64_t seed = 0);

}  // namespace cvar::num
