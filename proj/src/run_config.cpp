#include "miml/run_config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>

#include "miml/errors.hpp"

namespace miml {

namespace {

const std::map<std::string, std::string>& default_values() {
  static const std::map<std::string, std::string> defaults = {
      {"dataset", ""},
      {"out_dir", ""},
      {"seed", "0"},
      {"loss", "square"},
      {"lambda", "0"},
      {"lr", "0.001"},
      {"momentum", "0.9"},
      {"epochs_per_phase", "10"},
      {"outer_rounds", "1"},
      {"phase_tol", "0.0001"},
      {"lr_decay", "1"},
      {"grad_clip", "0"},
      {"dropout", "0"},
      {"slack_mode", "per_label"},
      {"warp", "true"},
      {"width", "2048"},
      {"layer_pairs", "1"},
      {"graph_k", "0"},
      {"graph_exclude_self", "false"},
      {"workers", "1"},
      {"gen_labels", "5"},
      {"gen_dim", "16"},
      {"gen_bags", "100"},
      {"gen_min_instances", "5"},
      {"gen_max_instances", "15"},
      {"gen_separation", "4"},
      {"gen_noise", "0"},
      {"gen_background", "0"},
      {"gen_pi", "none"},
      {"gen_pi_noise", "0"},
      {"gen_pi_dim", "0"},
  };
  return defaults;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig::RunConfig() : values_(default_values()) {}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
  it->second = value;
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string text = trim(line);
    if (text.empty()) continue;
    const std::size_t eq = text.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + " line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    try {
      set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(path + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& v = get(key);
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0')
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  return d;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  const std::string& v = get(key);
  char* end = nullptr;
  const unsigned long long u = std::strtoull(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0')
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
  return u;
}

std::size_t RunConfig::get_size(const std::string& key) const {
  return static_cast<std::size_t>(get_u64(key));
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

std::string RunConfig::snapshot() const {
  std::string out;
  for (const auto& [key, value] : values_) out += key + " = " + value + "\n";
  return out;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig tc;
  const std::string loss = get("loss");
  if (loss == "square")
    tc.loss_kind = LossKind::square;
  else if (loss == "ranking")
    tc.loss_kind = LossKind::ranking;
  else
    throw ConfigError("key 'loss': expected square or ranking, got '" + loss + "'");
  tc.lambda = get_double("lambda");
  tc.lr = get_double("lr");
  tc.momentum = get_double("momentum");
  tc.epochs_per_phase = get_size("epochs_per_phase");
  tc.outer_rounds = get_size("outer_rounds");
  tc.phase_tol = get_double("phase_tol");
  tc.seed = get_u64("seed");
  tc.lr_decay = get_double("lr_decay");
  tc.grad_clip = get_double("grad_clip");
  tc.dropout = get_double("dropout");
  const std::string mode = get("slack_mode");
  if (mode == "per_label")
    tc.slack_mode = SlackMode::per_label;
  else if (mode == "scalar")
    tc.slack_mode = SlackMode::scalar;
  else
    throw ConfigError("key 'slack_mode': expected per_label or scalar, got '" + mode + "'");
  tc.warp = get_bool("warp");
  tc.hidden_width = get_size("width");
  tc.layer_pairs = get_size("layer_pairs");
  const std::size_t k = get_size("graph_k");
  if (k > 0) tc.graph = GraphConfig{k, get_bool("graph_exclude_self")};
  return tc;
}

SynthConfig RunConfig::synth_config() const {
  SynthConfig sc;
  sc.num_labels = get_size("gen_labels");
  sc.feature_dim = get_size("gen_dim");
  sc.num_bags = get_size("gen_bags");
  sc.min_instances = get_size("gen_min_instances");
  sc.max_instances = get_size("gen_max_instances");
  sc.separation = get_double("gen_separation");
  sc.noise_sigma = get_double("gen_noise");
  sc.background_fraction = get_double("gen_background");
  const std::string pi = get("gen_pi");
  if (pi == "none")
    sc.pi = PiKind::none;
  else if (pi == "positive_sets")
    sc.pi = PiKind::positive_sets;
  else if (pi == "features")
    sc.pi = PiKind::features;
  else if (pi == "boxes")
    sc.pi = PiKind::boxes;
  else
    throw ConfigError("key 'gen_pi': expected none/positive_sets/features/boxes, got '" + pi +
                      "'");
  sc.pi_noise = get_double("gen_pi_noise");
  sc.pi_feature_dim = get_size("gen_pi_dim");
  return sc;
}

}  // namespace miml
