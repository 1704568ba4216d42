#include "cvar/eval/ablation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "cvar/common/error.hpp"

namespace cvar::eval {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  while (!s.empty()) {
    const auto comma = s.find(',');
    auto item = s.substr(0, comma);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (item.empty()) throw ConfigError("empty entry in grid list");
    out.emplace_back(item);
    s = comma == std::string_view::npos ? std::string_view{} : s.substr(comma + 1);
  }
  if (out.empty()) throw ConfigError("grid is empty");
  return out;
}

AblationCell make_cell(AblationKind k, const std::string& value) {
  AblationCell c;
  switch (k) {
    case AblationKind::Alpha:
      c.overrides = {{"alpha", value}};
      break;
    case AblationKind::Lambda:
      c.overrides = {{"lambda", value}};
      break;
    case AblationKind::Layers:
      c.overrides = {{"layers", value}};
      break;
    case AblationKind::Pairing:
      c.overrides = {{"pairing", value}};
      break;
    case AblationKind::Metric: {
      const auto colon = value.find(':');
      if (colon == std::string::npos) throw ConfigError("metric cell '" + value + "' must read dx:da");
      c.overrides = {{"dx", value.substr(0, colon)}, {"da", value.substr(colon + 1)}};
      break;
    }
  }
  for (const auto& [key, v] : c.overrides) c.label += (c.label.empty() ? "" : "_") + key + "_" + v;
  return c;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string opt_fmt(const std::optional<double>& v) { return v ? fmt(*v) : "nan"; }

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    if (ch == '<') out += "&lt;";
    else if (ch == '>') out += "&gt;";
    else if (ch == '&') out += "&amp;";
    else out += ch;
  }
  return out;
}

}  // namespace

std::string_view to_string(AblationKind k) {
  switch (k) {
    case AblationKind::Alpha: return "alpha";
    case AblationKind::Metric: return "metric";
    case AblationKind::Layers: return "layers";
    case AblationKind::Lambda: return "lambda";
    case AblationKind::Pairing: return "pairing";
  }
  return "?";
}

AblationKind parse_ablation_kind(std::string_view s) {
  for (auto k : {AblationKind::Alpha, AblationKind::Metric, AblationKind::Layers, AblationKind::Lambda,
                 AblationKind::Pairing})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown ablation kind '" + std::string(s) + "' (alpha|metric|layers|lambda|pairing)");
}

std::vector<std::string> swept_keys(AblationKind k) {
  switch (k) {
    case AblationKind::Metric: return {"dx", "da"};
    default: return {std::string(to_string(k))};
  }
}

std::vector<AblationCell> default_grid(AblationKind k, const train::TrainConfig& base) {
  switch (k) {
    case AblationKind::Alpha: return parse_grid(k, "0,0.25,0.5,0.75,1,1.5,2");
    case AblationKind::Metric: return parse_grid(k, "pixel:l2,pixel:symkl,embed:l2,embed:symkl");
    case AblationKind::Lambda: return parse_grid(k, "0.001,0.005,0.025,0.125");
    case AblationKind::Pairing: return parse_grid(k, "matched,all");
    case AblationKind::Layers: {
      const int L = base.model.layers;
      std::vector<AblationCell> cells;
      int prev = 0;
      for (int q = 1; q <= 4; ++q) {
        const int top = std::max(1, q * L / 4);
        if (top == prev) continue;
        prev = top;
        cells.push_back(make_cell(k, top == 1 ? "1" : "1-" + std::to_string(top)));
      }
      return cells;
    }
  }
  return {};
}

std::vector<AblationCell> parse_grid(AblationKind k, std::string_view values) {
  std::vector<AblationCell> cells;
  for (const auto& v : split_list(values)) cells.push_back(make_cell(k, v));
  return cells;
}

EvalReport full_report(const train::RunResult& run, const train::TrainConfig& cfg, const synth::Dataset& data,
                       const Remark2Options& r2) {
  EvalReport r;
  const auto& m = cfg.model;
  r.exo = eval_split(run.state.params, data.val.exo, m, model::View::Exo, cfg.eval_crops);
  r.ego = eval_split(run.state.params, data.val.ego, m, model::View::Ego, cfg.eval_crops);
  const loss::EmbedNet* g = cfg.loss.dx == loss::DxKind::DeepEmbed ? &run.embed : nullptr;
  r.proportionality =
      proportionality_report(run.state.params, g, data.val.exo, data.val.ego, m, cfg.loss, 200, cfg.seed).fit.pearson;
  const auto untrained = train::init_state(cfg).params;
  r.proportionality_untrained =
      proportionality_report(untrained, g, data.val.exo, data.val.ego, m, cfg.loss, 200, cfg.seed).fit.pearson;
  if (data.manifest.split("val").paired) r.remark2 = remark2_oracle(run.state.params, data, "val", m, cfg.loss, r2);
  r.fingerprint = train::fingerprint(cfg);
  return r;
}

std::vector<CellResult> run_ablation(AblationKind kind, const std::vector<AblationCell>& grid,
                                     const train::TrainConfig& base, const synth::Dataset& data,
                                     const AblationOptions& opt) {
  if (grid.empty()) throw ConfigError("ablation grid is empty");
  std::vector<CellResult> results(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    results[i].cell = grid[i];
    auto cfg = base;
    for (const auto& [key, value] : grid[i].overrides) train::apply_override(cfg, key, value);
    results[i].config = train::align_to_dataset(cfg, data.manifest);
    results[i].config.validate();
  }
  check_cells_isolated(kind, results);
  if (!opt.out.empty()) fs::create_directories(opt.out);
  const auto table = opt.out / (std::string(to_string(kind)) + ".csv");

  std::mutex mu;
  std::vector<bool> done(grid.size(), false);
  std::exception_ptr failure;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < grid.size();) {
      {
        std::lock_guard lock(mu);
        if (failure) return;
      }
      try {
        train::RunOptions ro;
        if (!opt.out.empty()) ro.out = opt.out / grid[i].label;
        ro.resume = true;
        const auto run = train::run_training(results[i].config, data, ro);
        auto report = full_report(run, results[i].config, data);
        std::lock_guard lock(mu);
        results[i].report = std::move(report);
        done[i] = true;
        if (opt.log) *opt.log << "cell " << grid[i].label << " ego top-1 " << results[i].report.ego.top1 << "\n";
        if (!opt.out.empty()) {
          std::vector<CellResult> finished;
          for (std::size_t j = 0; j < results.size(); ++j)
            if (done[j]) finished.push_back(results[j]);
          write_table(table, finished);
        }
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int n = std::clamp(opt.threads, 1, static_cast<int>(grid.size()));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  if (!opt.out.empty()) write_svg(opt.out / (std::string(to_string(kind)) + ".svg"), kind, results);
  return results;
}

void check_cells_isolated(AblationKind kind, const std::vector<CellResult>& cells) {
  const auto keys = swept_keys(kind);
  if (cells.empty()) return;
  const auto ref = train::to_map(cells.front().config);
  for (const auto& c : cells) {
    for (const auto& [key, value] : train::to_map(c.config)) {
      if (std::find(keys.begin(), keys.end(), key) != keys.end()) continue;
      if (ref.at(key) != value)
        throw ConfigError("ablation cell " + c.cell.label + " also changes '" + key + "'");
    }
  }
}

void write_table(const fs::path& path, const std::vector<CellResult>& cells) {
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << kAblationHeader << "\n";
    for (const auto& c : cells) {
      const auto& r = c.report;
      out << c.cell.label << "," << fmt(r.exo.top1) << "," << fmt(r.exo.top5) << "," << fmt(r.exo.map) << ","
          << fmt(r.ego.top1) << "," << fmt(r.ego.top5) << "," << fmt(r.ego.map) << "," << opt_fmt(r.proportionality)
          << "," << opt_fmt(r.proportionality_untrained) << ","
          << (r.remark2 ? fmt(r.remark2->mean) : "nan") << "," << (r.remark2 ? fmt(r.remark2->null_mean) : "nan")
          << "," << (r.remark2 ? fmt(r.remark2->null_std) : "nan") << "," << r.fingerprint << "\n";
    }
    if (!out) throw IoError("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_svg(const fs::path& path, AblationKind kind, const std::vector<CellResult>& cells) {
  constexpr double W = 640, H = 360, L = 60, R = 20, T = 30, B = 70;
  const double n = static_cast<double>(std::max<std::size_t>(cells.size(), 1));
  auto x = [&](std::size_t i) { return L + (W - L - R) * (cells.size() == 1 ? 0.5 : i / (n - 1)); };
  auto y = [&](double v) { return T + (H - T - B) * (1.0 - v); };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\">" << to_string(kind)
    << " ablation: val top-1</text>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << y(0) << "\" x2=\"" << W - R << "\" y2=\"" << y(0)
    << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << y(0) << "\" x2=\"" << L << "\" y2=\"" << y(1) << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k)
    s << "<text x=\"" << L - 6 << "\" y=\"" << y(k / 4.0) + 4 << "\" text-anchor=\"end\">" << k / 4.0 << "</text>\n";
  for (std::size_t i = 0; i < cells.size(); ++i)
    s << "<text x=\"" << x(i) << "\" y=\"" << y(0) + 16 << "\" text-anchor=\"end\" transform=\"rotate(-30 " << x(i)
      << " " << y(0) + 16 << ")\">" << xml_escape(cells[i].cell.label) << "</text>\n";
  auto series = [&](auto get, const char* color, const char* name, double ly) {
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < cells.size(); ++i) s << x(i) << "," << y(get(cells[i].report)) << " ";
    s << "\"/>\n";
    for (std::size_t i = 0; i < cells.size(); ++i)
      s << "<circle cx=\"" << x(i) << "\" cy=\"" << y(get(cells[i].report)) << "\" r=\"3\" fill=\"" << color
        << "\"/>\n";
    s << "<text x=\"" << W - R - 60 << "\" y=\"" << ly << "\" fill=\"" << color << "\">" << name << "</text>\n";
  };
  series([](const EvalReport& r) { return r.ego.top1; }, "#c0392b", "ego", T + 12);
  series([](const EvalReport& r) { return r.exo.top1; }, "#2e86c1", "exo", T + 26);
  s << "</svg>\n";
  std::ofstream out(path, std::ios::trunc);
  out << s.str();
  if (!out) throw IoError("cannot write " + path.string());
}

int worker_threads() {
  if (const char* env = std::getenv("CVAR_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) throw ConfigError("CVAR_THREADS must be a positive integer");
    return static_cast<int>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace cvar::eval
