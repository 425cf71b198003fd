#include "cli_config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "visita/error.hpp"

namespace visita::cli {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <class T>
T parse_number(std::string_view key, std::string_view value) {
  T v{};
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || p != value.data() + value.size() || value.empty()) {
    throw ConfigError("bad value '" + std::string(value) + "' for " + std::string(key));
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("bad value '" + std::string(value) + "' for " + std::string(key) + " (expected true or false)");
}

std::string format_double(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

struct Field {
  std::function<void(CliConfig&, std::string_view, std::string_view)> set;
  std::function<std::string(const CliConfig&)> get;
};

template <class T>
Field field(T CliConfig::*member) {
  Field f;
  f.set = [member](CliConfig& c, std::string_view key, std::string_view value) {
    if constexpr (std::is_same_v<T, bool>) {
      c.*member = parse_bool(key, value);
    } else if constexpr (std::is_same_v<T, std::string>) {
      c.*member = std::string(value);
    } else {
      c.*member = parse_number<T>(key, value);
    }
  };
  f.get = [member](const CliConfig& c) {
    if constexpr (std::is_same_v<T, bool>) {
      return std::string(c.*member ? "true" : "false");
    } else if constexpr (std::is_same_v<T, std::string>) {
      return c.*member;
    } else if constexpr (std::is_floating_point_v<T>) {
      return format_double(c.*member);
    } else {
      return std::to_string(c.*member);
    }
  };
  return f;
}

const std::map<std::string, Field, std::less<>>& fields() {
  static const std::map<std::string, Field, std::less<>> m = {
      {"learning_rate", field(&CliConfig::learning_rate)},
      {"batch_size", field(&CliConfig::batch_size)},
      {"epochs", field(&CliConfig::epochs)},
      {"seed", field(&CliConfig::seed)},
      {"d_embed", field(&CliConfig::d_embed)},
      {"d_model", field(&CliConfig::d_model)},
      {"heads", field(&CliConfig::heads)},
      {"blocks", field(&CliConfig::blocks)},
      {"patch_size", field(&CliConfig::patch_size)},
      {"image_size", field(&CliConfig::image_size)},
      {"caption_len", field(&CliConfig::caption_len)},
      {"vocab_cap", field(&CliConfig::vocab_cap)},
      {"C", field(&CliConfig::C)},
      {"mkl_tol", field(&CliConfig::mkl_tol)},
      {"mkl_max_outer", field(&CliConfig::mkl_max_outer)},
      {"kernels", field(&CliConfig::kernels)},
      {"mkl_head", field(&CliConfig::mkl_head)},
      {"split", field(&CliConfig::split)},
  };
  return m;
}

}  // namespace

const std::vector<std::string>& CliConfig::keys() {
  static const std::vector<std::string> k = {
      "learning_rate", "batch_size", "epochs",     "seed", "d_embed", "d_model",       "heads",
      "blocks",        "patch_size", "image_size", "caption_len", "vocab_cap", "C", "mkl_tol",
      "mkl_max_outer", "kernels",    "mkl_head",   "split",
  };
  return k;
}

void CliConfig::set(std::string_view key, std::string_view value) {
  auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  it->second.set(*this, key, trim(value));
}

std::string CliConfig::get(std::string_view key) const {
  auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  return it->second.get(*this);
}

void CliConfig::validate() const {
  train_config().validate();
  model_config(2).validate();
  data_options().fractions.validate();
  if (vocab_cap < 3) throw ConfigError("vocab_cap must be at least 3");
  if (!(C > 0.0) || !std::isfinite(C)) throw ConfigError("C must be positive");
  if (!(mkl_tol > 0.0)) throw ConfigError("mkl_tol must be positive");
  if (mkl_max_outer == 0) throw ConfigError("mkl_max_outer must be positive");
  kernel_bank();
}

ModelConfig CliConfig::model_config(std::size_t vocab_size) const {
  ModelConfig m;
  m.image_size = image_size;
  m.patch_size = patch_size;
  m.d_model = d_model;
  m.d_embed = d_embed;
  m.heads = heads;
  m.blocks = blocks;
  m.caption_len = caption_len;
  m.vocab_size = vocab_size;
  return m;
}

TrainConfig CliConfig::train_config() const {
  TrainConfig t;
  t.learning_rate = learning_rate;
  t.batch_size = batch_size;
  t.epochs = epochs;
  t.seed = seed;
  return t;
}

DataOptions CliConfig::data_options() const {
  DataOptions d;
  d.image_size = image_size;
  d.caption_len = caption_len;
  d.vocab_cap = vocab_cap;
  d.seed = seed;
  d.fractions = parse_split_fractions(split);
  return d;
}

std::vector<KernelSpec> CliConfig::kernel_bank() const { return parse_kernel_bank(kernels); }

MklOptions CliConfig::mkl_options() const {
  MklOptions o;
  o.tol = mkl_tol;
  o.max_outer = mkl_max_outer;
  return o;
}

void apply_config_text(CliConfig& cfg, std::string_view text, std::string_view what) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const auto where = std::string(what) + " line " + std::to_string(line_no);
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected key = value");
    try {
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      std::string msg = e.what();
      constexpr std::string_view prefix = "config error: ";
      if (msg.starts_with(prefix)) msg.erase(0, prefix.size());
      throw ConfigError(where + ": " + msg);
    }
    if (end == text.size()) break;
  }
}

}  // namespace visita::cli
