#include "cvar/train/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <vector>

#include "cvar/common/binary_io.hpp"
#include "cvar/common/error.hpp"

namespace cvar::train {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    throw ConfigError("bad value '" + std::string(v) + "' for " + std::string(key));
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("bad boolean '" + std::string(v) + "' for " + std::string(key));
}

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct Key {
  std::string name;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, std::string_view)> set;
};

template <typename M>
Key int_key(std::string name, M member) {
  return {name, [member](const TrainConfig& c) { return std::to_string(member(c)); },
          [member, name](TrainConfig& c, std::string_view v) { member(c) = parse_number<int>(name, v); }};
}

template <typename M>
Key u64_key(std::string name, M member) {
  return {name, [member](const TrainConfig& c) { return std::to_string(member(c)); },
          [member, name](TrainConfig& c, std::string_view v) { member(c) = parse_number<std::uint64_t>(name, v); }};
}

template <typename M>
Key real_key(std::string name, M member) {
  return {name, [member](const TrainConfig& c) { return fmt(member(c)); },
          [member, name](TrainConfig& c, std::string_view v) { member(c) = parse_number<double>(name, v); }};
}

template <typename M>
Key bool_key(std::string name, M member) {
  return {name, [member](const TrainConfig& c) { return member(c) ? "true" : "false"; },
          [member, name](TrainConfig& c, std::string_view v) { member(c) = parse_bool(name, v); }};
}

#define FIELD(expr) [](auto& c) -> auto& { return c.expr; }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      int_key("epochs", FIELD(epochs)),
      real_key("lr", FIELD(lr)),
      real_key("momentum", FIELD(momentum)),
      real_key("clip_norm", FIELD(clip_norm)),
      int_key("batch", FIELD(batch)),
      u64_key("seed", FIELD(seed)),
      bool_key("unpaired", FIELD(unpaired)),
      bool_key("self_loss", FIELD(self_loss)),
      bool_key("augment", FIELD(augment)),
      int_key("checkpoint_every", FIELD(checkpoint_every)),
      int_key("embed_epochs", FIELD(embed_epochs)),
      int_key("embed_layers", FIELD(embed_layers)),
      real_key("embed_lr", FIELD(embed_lr)),
      real_key("alpha", FIELD(loss.alpha)),
      real_key("beta", FIELD(loss.beta)),
      real_key("lambda", FIELD(loss.lambda)),
      real_key("epsilon", FIELD(loss.epsilon)),
      {"dx", [](const TrainConfig& c) { return std::string(loss::to_string(c.loss.dx)); },
       [](TrainConfig& c, std::string_view v) { c.loss.dx = loss::parse_dx(v); }},
      {"da", [](const TrainConfig& c) { return std::string(loss::to_string(c.loss.da)); },
       [](TrainConfig& c, std::string_view v) { c.loss.da = loss::parse_da(v); }},
      {"layers", [](const TrainConfig& c) { return loss::format_layers(c.loss.layers); },
       [](TrainConfig& c, std::string_view v) { c.loss.layers = loss::parse_layers(v); }},
      {"pairing", [](const TrainConfig& c) { return std::string(loss::to_string(c.loss.pairing)); },
       [](TrainConfig& c, std::string_view v) { c.loss.pairing = loss::parse_pairing(v); }},
      int_key("model.frames", FIELD(model.frames)),
      {"model.size", [](const TrainConfig& c) { return std::to_string(c.model.height); },
       [](TrainConfig& c, std::string_view v) { c.model.height = c.model.width = parse_number<int>("model.size", v); }},
      int_key("model.temporal_patch", FIELD(model.temporal_patch)),
      int_key("model.patch", FIELD(model.patch)),
      int_key("model.dim", FIELD(model.dim)),
      int_key("model.layers", FIELD(model.layers)),
      int_key("model.heads", FIELD(model.heads)),
      real_key("model.dropout", FIELD(model.dropout)),
      u64_key("model.seed", FIELD(model.seed)),
      {"data.name", [](const TrainConfig& c) { return c.dataset.name; },
       [](TrainConfig& c, std::string_view v) { c.dataset.name = std::string(v); }},
      int_key("data.classes", FIELD(dataset.classes)),
      int_key("data.clips_per_class", FIELD(dataset.clips_per_class)),
      int_key("data.val_clips_per_class", FIELD(dataset.val_clips_per_class)),
      bool_key("data.paired", FIELD(dataset.paired)),
      u64_key("data.seed", FIELD(dataset.seed)),
      int_key("data.frames", FIELD(dataset.frames)),
      int_key("data.size", FIELD(dataset.size)),
      {"data", [](const TrainConfig& c) { return c.data; },
       [](TrainConfig& c, std::string_view v) { c.data = std::string(v); }},
      int_key("eval.crops", FIELD(eval_crops)),
  };
  return table;
}

#undef FIELD

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(lr > 0) || !std::isfinite(lr)) throw ConfigError("lr must be > 0");
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError("momentum must be in [0, 1)");
  if (!(clip_norm >= 0) || !std::isfinite(clip_norm)) throw ConfigError("clip_norm must be >= 0");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (embed_epochs < 0) throw ConfigError("embed_epochs must be >= 0");
  if (embed_layers < 1) throw ConfigError("embed_layers must be >= 1");
  if (!(embed_lr > 0) || !std::isfinite(embed_lr)) throw ConfigError("embed_lr must be > 0");
  if (eval_crops != 1 && eval_crops != 3) throw ConfigError("eval.crops must be 1 or 3");
  loss.validate();
  model.validate();
  dataset.validate();
  if (loss.layers.back() > model.layers) throw ConfigError("loss layer subset exceeds model depth");
}

void apply_override(TrainConfig& cfg, std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  for (const auto& k : keys())
    if (k.name == key) {
      k.set(cfg, value);
      return;
    }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

TrainConfig parse_config(std::string_view text, TrainConfig base) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    apply_override(base, line.substr(0, eq), line.substr(eq + 1));
  }
  return base;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  const auto bytes = io::read_bytes(path);
  return parse_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), std::move(base));
}

std::string to_text(const TrainConfig& cfg) {
  std::ostringstream os;
  for (const auto& k : keys()) os << k.name << " = " << k.get(cfg) << "\n";
  return os.str();
}

std::map<std::string, std::string> to_map(const TrainConfig& cfg) {
  std::map<std::string, std::string> m;
  for (const auto& k : keys()) m[k.name] = k.get(cfg);
  return m;
}

void save_config(const std::filesystem::path& path, const TrainConfig& cfg) {
  std::ofstream out(path, std::ios::binary);
  out << to_text(cfg);
  if (!out) throw IoError("cannot write config " + path.string());
}

std::string fingerprint(const TrainConfig& cfg) {
  const auto text = to_text(cfg);
  return io::sha256_hex({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

double cosine_lr(std::uint64_t step, std::uint64_t total_steps, double base_lr) {
  if (total_steps == 0 || step > total_steps)
    throw ConfigError("cosine_lr: step " + std::to_string(step) + " outside [0, " + std::to_string(total_steps) + "]");
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps)));
}

}  // namespace cvar::train
