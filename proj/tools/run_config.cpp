#include "run_config.h"

#include <charconv>
#include <sstream>
#include <vector>

#include <cap/errors.h>
#include <cap/model.h>

namespace cap::cli {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("invalid integer for " + std::string(key) + ": \"" + std::string(v) + "\"");
  }
  return out;
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("invalid number for " + std::string(key) + ": \"" + std::string(v) + "\"");
  }
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("invalid boolean for " + std::string(key) + ": \"" + std::string(v) + "\"");
}

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

TrainingConfig preset_config(std::string_view name) {
  if (name == "cifar") return TrainingConfig::cifar();
  if (name == "mvtec") return TrainingConfig::mvtec();
  throw ConfigError("unknown preset \"" + std::string(name) + "\" (expected cifar or mvtec)");
}

void apply_setting(RunConfig& c, std::string_view key, std::string_view value) {
  auto& t = c.training;
  if (key == "preset") {
    const std::uint64_t seed = t.seed;
    const std::size_t workers = t.workers;
    t = preset_config(value);
    t.seed = seed;
    t.workers = workers;
    c.preset = std::string(value);
  } else if (key == "k") {
    t.k = to_size(key, value);
  } else if (key == "lambda") {
    t.lambda = to_double(key, value);
  } else if (key == "lr") {
    t.learning_rate = to_double(key, value);
  } else if (key == "batch") {
    t.batch_size = to_size(key, value);
  } else if (key == "epochs") {
    t.epochs = to_size(key, value);
  } else if (key == "seed") {
    t.seed = to_size(key, value);
    c.synth.seed = t.seed;
  } else if (key == "head") {
    t.head_variant = parse_head_variant(value);
  } else if (key == "attention") {
    t.attention_enabled = to_bool(key, value);
  } else if (key == "beta1") {
    t.beta1 = to_double(key, value);
  } else if (key == "beta2") {
    t.beta2 = to_double(key, value);
  } else if (key == "epsilon") {
    t.epsilon = to_double(key, value);
  } else if (key == "scale_euclidean_by_dim") {
    t.scale_euclidean_by_dim = to_bool(key, value);
  } else if (key == "workers") {
    t.workers = to_size(key, value);
  } else if (key == "bank") {
    c.bank = std::string(value);
  } else if (key == "model") {
    c.model = std::string(value);
  } else if (key == "test") {
    c.test = std::string(value);
  } else if (key == "maps") {
    c.maps = std::string(value);
  } else if (key == "input") {
    c.input = std::string(value);
  } else if (key == "out") {
    c.out = std::string(value);
  } else if (key == "sweep") {
    if (value != "k" && value != "lambda" && !value.empty()) throw ConfigError("sweep must be k or lambda");
    c.sweep = std::string(value);
  } else if (key == "heatmap_size") {
    c.heatmap_size = to_size(key, value);
  } else if (key == "synth_dim") {
    c.synth.dim = to_size(key, value);
  } else if (key == "synth_train") {
    c.synth.n_train = to_size(key, value);
  } else if (key == "synth_test_normal") {
    c.synth.n_test_normal = to_size(key, value);
  } else if (key == "synth_test_anomaly") {
    c.synth.n_test_anomaly = to_size(key, value);
  } else if (key == "synth_modes") {
    c.synth.n_modes = to_size(key, value);
  } else if (key == "synth_offset") {
    c.synth.anomaly_offset = to_double(key, value);
  } else if (key == "synth_centre_norm") {
    c.synth.centre_norm = to_double(key, value);
  } else {
    throw ConfigError("unknown config key \"" + std::string(key) + "\"");
  }
}

void apply_config_text(RunConfig& config, std::string_view text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    std::string_view sv = line;
    if (const auto hash = sv.find('#'); hash != std::string_view::npos) sv = sv.substr(0, hash);
    sv = trim(sv);
    if (sv.empty()) continue;
    const auto eq = sv.find('=');
    if (eq == std::string_view::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    entries.emplace_back(std::string(trim(sv.substr(0, eq))), std::string(trim(sv.substr(eq + 1))));
  }
  for (const auto& [k, v] : entries) {
    if (k == "preset") apply_setting(config, k, v);
  }
  for (const auto& [k, v] : entries) {
    if (k != "preset") apply_setting(config, k, v);
  }
}

std::string resolved_config_text(const RunConfig& c) {
  const auto& t = c.training;
  std::ostringstream os;
  os << "preset=" << c.preset << '\n'
     << "k=" << t.k << '\n'
     << "lambda=" << fmt(t.lambda) << '\n'
     << "lr=" << fmt(t.learning_rate) << '\n'
     << "batch=" << t.batch_size << '\n'
     << "epochs=" << t.epochs << '\n'
     << "seed=" << t.seed << '\n'
     << "head=" << head_variant_name(t.head_variant) << '\n'
     << "attention=" << (t.attention_enabled ? "true" : "false") << '\n'
     << "beta1=" << fmt(t.beta1) << '\n'
     << "beta2=" << fmt(t.beta2) << '\n'
     << "epsilon=" << fmt(t.epsilon) << '\n'
     << "scale_euclidean_by_dim=" << (t.scale_euclidean_by_dim ? "true" : "false") << '\n'
     << "bank=" << c.bank.string() << '\n'
     << "model=" << c.model.string() << '\n'
     << "test=" << c.test.string() << '\n'
     << "maps=" << c.maps.string() << '\n'
     << "input=" << c.input.string() << '\n'
     << "out=" << c.out.string() << '\n'
     << "sweep=" << c.sweep << '\n'
     << "heatmap_size=" << c.heatmap_size << '\n'
     << "synth_dim=" << c.synth.dim << '\n'
     << "synth_train=" << c.synth.n_train << '\n'
     << "synth_test_normal=" << c.synth.n_test_normal << '\n'
     << "synth_test_anomaly=" << c.synth.n_test_anomaly << '\n'
     << "synth_modes=" << c.synth.n_modes << '\n'
     << "synth_offset=" << fmt(c.synth.anomaly_offset) << '\n'
     << "synth_centre_norm=" << fmt(c.synth.centre_norm) << '\n';
  return os.str();
}

}  // namespace cap::cli
