#include "cvar/loss/bound.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cvar/common/error.hpp"

namespace cvar::loss {

namespace {

double euclid(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeError("bound: vector sizes differ");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// Rounding allowance for the exact-triangle check only.
constexpr double kTriangleTol = 1e-9;

}  // namespace

double root_dx(const std::vector<double>& ga, const std::vector<double>& gb, const LossConfig& cfg) {
  return std::min(euclid(ga, gb), cfg.beta);
}

double root_dx(const synth::VideoClip& a, const synth::VideoClip& b, const LossConfig& cfg,
               const EmbedNet* embed) {
  if (a.data.size() != b.data.size() || a.data.empty()) throw ShapeError("bound: clip sizes differ");
  if (cfg.dx == DxKind::DeepEmbed) {
    if (!embed) throw ConfigError("deep-embed d_x needs an embedding network");
    return root_dx(embed->embed(a), embed->embed(b), cfg);
  }
  double s = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    s += d * d;
  }
  return std::min(std::sqrt(s / static_cast<double>(a.data.size())), cfg.beta);
}

double root_da(const std::vector<double>& a, const std::vector<double>& b, const LossConfig& cfg) {
  return std::min(euclid(a, b), cfg.beta);
}

BoundReport verify_bound(const std::vector<BoundTriple>& triples, const LossConfig& cfg, const EmbedNet* embed,
                         std::size_t bins) {
  cfg.validate();
  if (bins == 0) throw ConfigError("verify_bound: need at least one histogram bin");
  const double a = cfg.alpha, allowance = (1 + a) * cfg.beta;
  BoundReport r;
  r.histogram.assign(bins, 0);
  r.histogram_hi = 2 * allowance;
  r.min_slack = std::numeric_limits<double>::infinity();
  r.max_slack = -std::numeric_limits<double>::infinity();
  double slack_sum = 0;

  for (const auto& t : triples) {
    if (!t.exo || !t.ego_paired || !t.ego_other) throw ConfigError("verify_bound: incomplete triple");
    const std::size_t layers = t.a_exo.size();
    if (t.a_paired.size() != layers || t.a_other.size() != layers)
      throw ShapeError("verify_bound: layer counts differ");
    double x_pair, x_other, x_between;
    if (cfg.dx == DxKind::DeepEmbed) {
      if (!embed) throw ConfigError("deep-embed d_x needs an embedding network");
      const auto ge = embed->embed(*t.exo), gp = embed->embed(*t.ego_paired), go = embed->embed(*t.ego_other);
      x_pair = root_dx(ge, gp, cfg);
      x_other = root_dx(ge, go, cfg);
      x_between = root_dx(go, gp, cfg);
    } else {
      x_pair = root_dx(*t.exo, *t.ego_paired, cfg, nullptr);
      x_other = root_dx(*t.exo, *t.ego_other, cfg, nullptr);
      x_between = root_dx(*t.ego_other, *t.ego_paired, cfg, nullptr);
    }
    ++r.triples;
    for (std::size_t l = 0; l < layers; ++l) {
      const double d_pair = root_da(t.a_exo[l], t.a_paired[l], cfg);
      const double d_other = root_da(t.a_exo[l], t.a_other[l], cfg);
      const double d_between = root_da(t.a_other[l], t.a_paired[l], cfg);
      const double lhs = x_pair - a * d_pair;
      const double rhs = x_other - a * d_other;
      const double slack = rhs + allowance - lhs;
      if (slack < 0) ++r.violations;
      if (rhs + x_between + a * d_between - lhs < -kTriangleTol) ++r.triangle_violations;
      ++r.checks;
      slack_sum += slack;
      r.min_slack = std::min(r.min_slack, slack);
      r.max_slack = std::max(r.max_slack, slack);
      const double pos = std::clamp(slack / r.histogram_hi, 0.0, 1.0);
      r.histogram[std::min(bins - 1, static_cast<std::size_t>(pos * static_cast<double>(bins)))]++;
    }
  }
  if (r.checks == 0) {
    r.min_slack = r.max_slack = 0;
  } else {
    r.mean_slack = slack_sum / static_cast<double>(r.checks);
  }
  return r;
}

}  // namespace cvar::loss
