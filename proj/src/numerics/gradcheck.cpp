#include "cvar/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "cvar/common/error.hpp"

namespace cvar::num {
namespace {

double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / (std::abs(analytic) + std::abs(numeric) + 1e-12);
}

double finite_value(const TensorD& y) {
  const double v = y.item();
  if (!std::isfinite(v)) throw NumericError("finite_diff_check: f(x) is not finite");
  return v;
}

}  // namespace

double finite_diff_check(const std::function<TensorD(const TensorD&)>& f, const TensorD& x,
                         double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_check: h must be positive");
  auto leaf = x.detach(true);
  std::vector<double> analytic(leaf.numel(), 0.0);
  {
    GradTape<double> tape;
    auto y = f(leaf);
    finite_value(y);
    if (y.requires_grad()) {
      tape.backward(y);
      if (!leaf.grad().empty()) std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.begin());
    }
  }
  double worst = 0.0;
  auto probe = x.detach(false);
  auto values = probe.mutable_data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double orig = values[i];
    values[i] = orig + h;
    const double fp = finite_value(f(probe));
    values[i] = orig - h;
    const double fm = finite_value(f(probe));
    values[i] = orig;
    worst = std::max(worst, rel_error(analytic[i], (fp - fm) / (2.0 * h)));
  }
  return worst;
}

GradCheckReport finite_diff_check_params(const std::function<TensorD()>& loss,
                                         std::vector<TensorD> params, double h,
                                         std::size_t max_coords_per_tensor, std::uint64_t seed) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_check_params: h must be positive");
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  {
    GradTape<double> tape;
    auto y = loss();
    finite_value(y);
    tape.backward(y);
  }
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) {
    std::vector<double> g(p.numel(), 0.0);
    if (!p.grad().empty()) std::copy(p.grad().begin(), p.grad().end(), g.begin());
    analytic.push_back(std::move(g));
    p.zero_grad();
  }

  GradCheckReport report;
  std::mt19937_64 rng(seed);
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto values = params[t].mutable_data();
    std::vector<std::size_t> coords(values.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (max_coords_per_tensor && coords.size() > max_coords_per_tensor) {
      // Partial Fisher-Yates on raw engine output keeps the sample portable.
      for (std::size_t i = 0; i < max_coords_per_tensor; ++i) {
        const auto j = i + static_cast<std::size_t>(rng() % (coords.size() - i));
        std::swap(coords[i], coords[j]);
      }
      coords.resize(max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (auto i : coords) {
      const double orig = values[i];
      values[i] = orig + h;
      const double fp = finite_value(loss());
      values[i] = orig - h;
      const double fm = finite_value(loss());
      values[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double err = rel_error(analytic[t][i], numeric);
      ++report.coords_checked;
      if (err > report.max_rel_error || report.coords_checked == 1) {
        report.max_rel_error = std::max(report.max_rel_error, err);
        report.worst_tensor = t;
        report.worst_index = i;
        report.worst_analytic = analytic[t][i];
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace cvar::num
