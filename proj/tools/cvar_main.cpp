#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cvar/common/binary_io.hpp"
#include "cvar/common/error.hpp"
#include "cvar/eval/ablation.hpp"
#include "cvar/eval/checks.hpp"
#include "cvar/eval/evaluate.hpp"
#include "cvar/train/config.hpp"
#include "cvar/train/trainer.hpp"

using namespace cvar;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

enum Exit : int { kPass = 0, kFail = 1, kConfig = 2, kIo = 3, kNumeric = 4 };

struct Options {
  std::string config;
  std::string out;
  std::string data;
  std::string ckpt;
  std::optional<std::uint64_t> seed;
  bool force = false;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> flags;  // --alpha and friends
};

// Shared flags: config file, output, seed, force and config-key overrides.
void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config, "Config file of key = value lines")->check(CLI::ExistingFile);
  sub->add_option("--out", o.out, "Output directory");
  sub->add_option("--seed", o.seed, "Seed");
  sub->add_flag("--force", o.force, "Overwrite existing output");
  sub->add_option("--set", o.sets, "Override any config key, as key=value")->take_all();
  for (const char* key : {"alpha", "beta", "lambda", "dx", "da", "layers", "pairing"})
    sub->add_option_function<std::string>(
        std::string("--") + key, [&o, key](const std::string& v) { o.flags.emplace_back(key, v); },
        std::string("Override '") + key + "'");
}

// Defaults, then the run's own config, then --config, then flags.
train::TrainConfig resolve(const Options& o, train::TrainConfig base, const char* seed_key = "seed") {
  if (!o.config.empty()) base = train::load_config(o.config, base);
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    train::apply_override(base, s.substr(0, eq), s.substr(eq + 1));
  }
  for (const auto& [k, v] : o.flags) train::apply_override(base, k, v);
  if (o.seed) train::apply_override(base, seed_key, std::to_string(*o.seed));
  if (!o.data.empty()) base.data = o.data;
  return base;
}

void write_json(const fs::path& path, const json& j) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("cannot write " + path.string());
}

void persist_config(const Options& o, const train::TrainConfig& cfg) {
  if (o.out.empty()) return;
  fs::create_directories(o.out);
  train::save_config(fs::path(o.out) / "config.txt", cfg);
}

int verdict(bool pass, const std::string& what, const std::string& detail) {
  std::cout << (pass ? "PASS " : "FAIL ") << what << ": " << detail << std::endl;
  return pass ? kPass : kFail;
}

std::string fmt(double v, const char* f = "%.4g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json to_json(const eval::ViewReport& r) {
  json ap = json::array();
  for (double v : r.per_class_ap) ap.push_back(std::isnan(v) ? json(nullptr) : json(v));
  return {{"samples", r.samples}, {"top1", r.top1},     {"top5", r.top5},
          {"map", r.map},         {"per_class_ap", ap}, {"excluded_classes", r.excluded_classes}};
}

json to_json(const eval::Remark2Report& r) {
  return {{"clips", r.clips},           {"skipped", r.skipped},   {"mean", r.mean},
          {"null_mean", r.null_mean},   {"null_std", r.null_std}, {"pass", r.pass()},
          {"per_clip", r.per_clip},     {"null_per_clip", r.null_per_clip}};
}

struct LoadedRun {
  train::TrainConfig cfg;
  train::RunResult run;
  bool trained = false;
};

// A run directory or a checkpoint file; its config comes from the metadata.
LoadedRun load_run(const std::string& ckpt) {
  fs::path path = ckpt;
  if (fs::is_directory(path)) path /= "model.ckpt";
  if (!fs::exists(path)) throw IoError("no checkpoint at " + path.string());
  const auto ck = model::load_checkpoint(path);
  LoadedRun r;
  r.cfg = train::parse_config(ck.metadata);
  r.cfg.model = ck.config;  // class counts are aligned to the dataset, not config keys
  r.run.state = train::from_checkpoint(ck);
  const auto embed_path = path.parent_path() / "embed.ckpt";
  if (r.cfg.loss.dx == loss::DxKind::DeepEmbed) {
    if (!fs::exists(embed_path)) throw IoError("deep-embed run without " + embed_path.string());
    const auto e = model::load_checkpoint(embed_path);
    r.run.embed = loss::EmbedNet(e.config, model::from_blocks(e.config, e.params));
  }
  r.trained = true;
  return r;
}

// Either the given checkpoint or an untrained model built from the config.
LoadedRun model_for(const Options& o, const synth::Dataset& data) {
  LoadedRun r;
  if (!o.ckpt.empty()) {
    r = load_run(o.ckpt);
    r.cfg = resolve(o, r.cfg);
  } else {
    r.cfg = train::align_to_dataset(resolve(o, {}), data.manifest);
    r.run.state = train::init_state(r.cfg);
  }
  r.cfg.validate();
  return r;
}

synth::Dataset dataset_for(const Options& o, const train::TrainConfig* run_cfg = nullptr) {
  std::string root = o.data;
  if (root.empty() && run_cfg) root = run_cfg->data;
  if (root.empty()) throw ConfigError("--data is required");
  return synth::load_dataset(root);
}

std::string paired_split(const synth::Dataset& data) {
  return data.manifest.split("train").paired ? "train" : "val";
}

int cmd_generate(const Options& o, bool paired) {
  if (o.out.empty()) throw ConfigError("--out is required");
  auto cfg = resolve(o, {}, "data.seed");
  if (paired) cfg.dataset.paired = true;
  cfg.dataset.validate();
  const auto m = synth::generate_dataset(cfg.dataset, o.out, o.force);
  persist_config(o, cfg);
  std::size_t total = 0;
  for (const auto& s : m.splits) {
    std::map<int, std::pair<int, int>> per_class;
    for (const auto& c : s.exo) ++per_class[c.label].first;
    for (const auto& c : s.ego) ++per_class[c.label].second;
    std::cout << s.name << (s.paired ? " (paired)" : " (unpaired)") << ":";
    for (const auto& [label, n] : per_class) std::cout << " c" << label << "=" << n.first << "+" << n.second;
    std::cout << "\n";
    total += s.exo.size() + s.ego.size();
  }
  const auto hash = io::sha256_hex(io::read_bytes(fs::path(o.out) / "manifest.json"));
  return verdict(true, "generate-data",
                 std::to_string(total) + " clips, " + m.format + ", manifest sha256 " + hash.substr(0, 16));
}

int cmd_train(const Options& o, bool resume) {
  if (o.out.empty()) throw ConfigError("--out is required");
  auto cfg = resolve(o, {});
  const auto data = dataset_for(o, &cfg);
  const fs::path out = o.out;
  if (fs::exists(out / "model.ckpt") && !resume) {
    if (!o.force) throw IoError(out.string() + " already holds a run; pass --resume or --force");
    for (const auto& e : fs::directory_iterator(out)) {
      const auto name = e.path().filename().string();
      if (name == "metrics.csv" || name == "config.txt" || e.path().extension() == ".ckpt") fs::remove(e.path());
    }
  }
  const auto t0 = std::chrono::steady_clock::now();
  train::RunOptions ro{out, resume, -1, &std::cout};
  const auto run = train::run_training(cfg, data, ro);
  cfg = train::align_to_dataset(cfg, data.manifest);
  const auto ego = eval::eval_split(run.state.params, data.val.ego, cfg.model, model::View::Ego, cfg.eval_crops);
  const auto exo = eval::eval_split(run.state.params, data.val.exo, cfg.model, model::View::Exo, cfg.eval_crops);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_json(out / "val.json", {{"exo", to_json(exo)}, {"ego", to_json(ego)}, {"fingerprint", train::fingerprint(cfg)}});
  return verdict(true, "train",
                 std::to_string(run.state.epoch) + " epochs, " + std::to_string(run.state.step) + " steps in " +
                     fmt(secs, "%.1f") + " s, val top-1 exo " + fmt(exo.top1) + " ego " + fmt(ego.top1));
}

int cmd_eval(const Options& o) {
  if (o.ckpt.empty()) throw ConfigError("--ckpt is required");
  auto lr = load_run(o.ckpt);
  lr.cfg = resolve(o, lr.cfg);
  lr.cfg.validate();
  const auto data = dataset_for(o, &lr.cfg);
  const auto r = eval::full_report(lr.run, lr.cfg, data);
  json j{{"exo", to_json(r.exo)},
         {"ego", to_json(r.ego)},
         {"proportionality", optional_json(r.proportionality)},
         {"proportionality_untrained", optional_json(r.proportionality_untrained)},
         {"fingerprint", r.fingerprint}};
  if (r.remark2) j["remark2"] = to_json(*r.remark2);
  const fs::path out = o.out.empty() ? (fs::is_directory(o.ckpt) ? fs::path(o.ckpt) : fs::path(o.ckpt).parent_path())
                                     : fs::path(o.out);
  write_json(out / "report.json", j);
  persist_config(o, lr.cfg);
  const double chance = 1.0 / lr.cfg.model.classes_ego;
  return verdict(r.ego.top1 >= 3 * chance, "eval",
                 "val top-1 exo " + fmt(r.exo.top1) + " ego " + fmt(r.ego.top1) + " (chance " + fmt(chance) +
                     "), ego mAP " + fmt(r.ego.map));
}

int cmd_gradcheck(const Options& o, std::size_t coords) {
  train::TrainConfig base;
  base.model = eval::gradcheck_model();
  base.loss.layers = {1, 2};
  base.loss.lambda = 1.0;  // large enough that the cross-view term shows in the gradient
  auto cfg = resolve(o, base);
  cfg.model.validate();
  cfg.loss.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = eval::objective_gradcheck(cfg.model, cfg.loss, cfg.seed, coords);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.out.empty())
    write_json(fs::path(o.out) / "gradcheck.json", {{"max_rel_error", r.max_rel_error},
                                                    {"coords", r.coords_checked},
                                                    {"worst_tensor", r.worst_tensor},
                                                    {"worst_index", r.worst_index},
                                                    {"analytic", r.worst_analytic},
                                                    {"numeric", r.worst_numeric},
                                                    {"seconds", secs}});
  persist_config(o, cfg);
  return verdict(r.max_rel_error < 1e-4, "gradcheck",
                 "max relative error " + fmt(r.max_rel_error, "%.3g") + " over " + std::to_string(r.coords_checked) +
                     " coordinates (threshold 1e-4)");
}

int cmd_verify_bound(const Options& o, std::size_t per_anchor, std::size_t bins) {
  const auto data = dataset_for(o);
  auto m = model_for(o, data);
  const auto split = paired_split(data);
  const auto s = eval::bound_triples(data, split, m.run.state.params, m.cfg.model, m.cfg.loss, per_anchor, m.cfg.seed);
  const loss::EmbedNet* g = m.cfg.loss.dx == loss::DxKind::DeepEmbed ? &m.run.embed : nullptr;
  if (g && !m.trained) {
    auto exo = train::prepare_view(data.train.exo, train::embed_config(m.cfg),
                                   loss::LossConfig{.dx = loss::DxKind::PixelL2}, nullptr);
    m.run.embed = train::pretrain_embed(exo, m.cfg, &std::cout);
  }
  const auto r = loss::verify_bound(s.triples, m.cfg.loss, g, bins);
  if (!o.out.empty())
    write_json(fs::path(o.out) / "bound.json", {{"split", split},
                                                {"triples", r.triples},
                                                {"checks", r.checks},
                                                {"violations", r.violations},
                                                {"triangle_violations", r.triangle_violations},
                                                {"min_slack", r.min_slack},
                                                {"mean_slack", r.mean_slack},
                                                {"max_slack", r.max_slack},
                                                {"histogram", r.histogram},
                                                {"histogram_hi", r.histogram_hi}});
  persist_config(o, m.cfg);
  return verdict(r.violations == 0 && r.triangle_violations == 0, "verify-bound",
                 std::to_string(r.violations) + " violations / " + std::to_string(r.triples) + " triples (" +
                     std::to_string(r.checks) + " layer checks, triangle form " +
                     std::to_string(r.triangle_violations) + ")");
}

int cmd_oracle(const Options& o, const std::string& mass, std::size_t clips) {
  if (o.ckpt.empty()) throw ConfigError("--ckpt is required");
  auto lr = load_run(o.ckpt);
  lr.cfg = resolve(o, lr.cfg);
  lr.cfg.validate();
  const auto data = dataset_for(o, &lr.cfg);
  eval::Remark2Options ro;
  if (mass == "uniform") ro.mass = eval::WarpMass::Uniform;
  else if (mass != "discard") throw ConfigError("--mass must be discard or uniform");
  ro.seed = lr.cfg.seed;
  ro.max_clips = clips;
  const auto r2 = eval::remark2_oracle(lr.run.state.params, data, "val", lr.cfg.model, lr.cfg.loss, ro);
  const loss::EmbedNet* g = lr.cfg.loss.dx == loss::DxKind::DeepEmbed ? &lr.run.embed : nullptr;
  const auto trained = eval::proportionality_report(lr.run.state.params, g, data.val.exo, data.val.ego, lr.cfg.model,
                                                    lr.cfg.loss, 200, lr.cfg.seed);
  const auto untrained = eval::proportionality_report(train::init_state(lr.cfg).params, g, data.val.exo,
                                                      data.val.ego, lr.cfg.model, lr.cfg.loss, 200, lr.cfg.seed);
  const auto rt = trained.fit.pearson, ru = untrained.fit.pearson;
  const bool prop_pass = rt && ru && *rt > *ru;
  const fs::path out = o.out.empty() ? (fs::is_directory(o.ckpt) ? fs::path(o.ckpt) : fs::path(o.ckpt).parent_path())
                                     : fs::path(o.out);
  write_json(out / "oracle.json", {{"remark2", to_json(r2)},
                                   {"proportionality", {{"trained", optional_json(rt)},
                                                        {"untrained", optional_json(ru)},
                                                        {"slope", trained.fit.slope},
                                                        {"intercept", trained.fit.intercept},
                                                        {"pairs", trained.fit.n}}}});
  persist_config(o, lr.cfg);
  return verdict(r2.pass() && prop_pass, "oracle",
                 "warp agreement " + fmt(r2.mean) + " vs null " + fmt(r2.null_mean) + " (sd " + fmt(r2.null_std) +
                     ", " + std::to_string(r2.clips) + " clips); D_x/D_a correlation trained " +
                     (rt ? fmt(*rt) : "undefined") + " vs untrained " + (ru ? fmt(*ru) : "undefined"));
}

int cmd_ablate(const Options& o, const std::string& kind_name, const std::string& grid_text, int threads) {
  if (o.out.empty()) throw ConfigError("--out is required");
  const auto kind = eval::parse_ablation_kind(kind_name);
  const auto base = resolve(o, {});
  const auto data = dataset_for(o, &base);
  const auto grid = grid_text.empty() ? eval::default_grid(kind, base) : eval::parse_grid(kind, grid_text);
  persist_config(o, base);
  eval::AblationOptions ao{o.out, threads > 0 ? threads : eval::worker_threads(), &std::cout};
  const auto cells = eval::run_ablation(kind, grid, base, data, ao);
  std::size_t best = 0;
  for (std::size_t i = 1; i < cells.size(); ++i)
    if (cells[i].report.ego.top1 > cells[best].report.ego.top1) best = i;
  return verdict(true, "ablate " + kind_name,
                 std::to_string(cells.size()) + " cells, best ego top-1 " + fmt(cells[best].report.ego.top1) +
                     " at " + cells[best].cell.label + ", table " +
                     (fs::path(o.out) / (kind_name + ".csv")).string());
}

int cmd_dump(const Options& o, const std::string& split, const std::string& view, std::size_t limit) {
  if (o.out.empty()) throw ConfigError("--out is required");
  const auto data = dataset_for(o);
  const auto m = model_for(o, data);
  if (split != "train" && split != "val") throw ConfigError("--split must be train or val");
  const auto& src = split == "train" ? data.train : data.val;
  std::vector<synth::VideoClip> clips;
  auto take = [&](const std::vector<synth::VideoClip>& v) {
    for (std::size_t i = 0; i < v.size() && (limit == 0 || i < limit); ++i) clips.push_back(v[i]);
  };
  if (view == "exo" || view == "both") take(src.exo);
  if (view == "ego" || view == "both") take(src.ego);
  if (view != "exo" && view != "ego" && view != "both") throw ConfigError("--view must be exo, ego or both");
  const auto files = eval::dump_attention(m.run.state.params, clips, m.cfg.model, m.cfg.loss.layers, o.out);
  persist_config(o, m.cfg);
  return verdict(true, "dump-attention",
                 std::to_string(files.size()) + " maps for " + std::to_string(clips.size()) + " clips in " + o.out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-view attention regularization for exo-to-ego action recognition on synthetic data"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("generate-data", "Render a synthetic exo/ego dataset");
  add_common(gen, o);
  bool paired = false;
  gen->add_flag("--paired", paired, "Pair the train split across views");

  auto* tr = app.add_subcommand("train", "Train a model, writing checkpoints and a metrics CSV");
  add_common(tr, o);
  tr->add_option("--data", o.data, "Dataset root");
  bool resume = false;
  tr->add_flag("--resume", resume, "Continue from <out>/model.ckpt");

  auto* ev = app.add_subcommand("eval", "Score a checkpoint on the val split");
  add_common(ev, o);
  ev->add_option("--data", o.data, "Dataset root (default: the run's)");
  ev->add_option("--ckpt", o.ckpt, "Run directory or checkpoint file");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the full objective in double precision");
  add_common(gc, o);
  std::size_t coords = 8;
  gc->add_option("--coords", coords, "Coordinates sampled per parameter tensor (0 = all)");

  auto* vb = app.add_subcommand("verify-bound", "Check the paired-sample bound on a paired split");
  add_common(vb, o);
  vb->add_option("--data", o.data, "Dataset root");
  vb->add_option("--ckpt", o.ckpt, "Run directory or checkpoint (default: untrained model)");
  std::size_t per_anchor = 5, bins = 10;
  vb->add_option("--per-anchor", per_anchor, "Unrelated ego clips per paired clip");
  vb->add_option("--bins", bins, "Slack histogram bins");

  auto* orc = app.add_subcommand("oracle", "Warp agreement and D_x/D_a proportionality of a checkpoint");
  add_common(orc, o);
  orc->add_option("--data", o.data, "Dataset root (default: the run's)");
  orc->add_option("--ckpt", o.ckpt, "Run directory or checkpoint file");
  std::string mass = "discard";
  std::size_t clips = 0;
  orc->add_option("--mass", mass, "Unmapped attention mass: discard or uniform");
  orc->add_option("--clips", clips, "Clip cap (0 = all)");

  auto* ab = app.add_subcommand("ablate", "Train and evaluate one cell per grid value");
  add_common(ab, o);
  ab->add_option("--data", o.data, "Dataset root");
  std::string kind = "alpha", grid;
  int threads = 0;
  ab->add_option("--kind", kind, "alpha|metric|layers|lambda|pairing");
  ab->add_option("--grid", grid, "Comma-separated values (metric cells as dx:da)");
  ab->add_option("--threads", threads, "Parallel cells (default: CVAR_THREADS or core count)");

  auto* da = app.add_subcommand("dump-attention", "Write attention maps as .attn.f32 files");
  add_common(da, o);
  da->add_option("--data", o.data, "Dataset root");
  da->add_option("--ckpt", o.ckpt, "Run directory or checkpoint (default: untrained model)");
  std::string split = "val", view = "both";
  std::size_t limit = 0;
  da->add_option("--split", split, "train or val");
  da->add_option("--view", view, "exo, ego or both");
  da->add_option("--limit", limit, "Clips per view (0 = all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kConfig;
  }

  try {
    if (*gen) return cmd_generate(o, paired);
    if (*tr) return cmd_train(o, resume);
    if (*ev) return cmd_eval(o);
    if (*gc) return cmd_gradcheck(o, coords);
    if (*vb) return cmd_verify_bound(o, per_anchor, bins);
    if (*orc) return cmd_oracle(o, mass, clips);
    if (*ab) return cmd_ablate(o, kind, grid, threads);
    if (*da) return cmd_dump(o, split, view, limit);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFail;
  }
  return kFail;
}
