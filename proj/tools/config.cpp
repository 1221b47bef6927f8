#include "config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "rdbn/text.hpp"

namespace rdbn::cli {

const std::vector<std::string>& RunConfig::known_keys() {
  static const std::vector<std::string> keys = {
      "K", "L", "alpha", "c_c", "c_u", "d_c", "lambda1", "lambda0", "m_shape",
      "iterations", "burn_in", "seed", "resample_dc",
      "input", "out", "holdout", "checkpoint_every", "threads",
      "nodes", "steps", "directed",
      "sim_M", "sim_lambda_diag", "sim_lambda_offdiag",
      "geweke_rounds", "heatmap_layer", "heatmap_nodes"};
  return keys;
}

RunConfig RunConfig::parse(std::istream& in, const std::string& source_name) {
  RunConfig cfg;
  cfg.source_ = source_name;
  std::string raw;
  std::int64_t lineno = 0;
  const auto& keys = known_keys();
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const auto where = source_name + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string_view::npos) {
      throw ConfigError(where + "expected key = value");
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ConfigError(where + "unknown key '" + key + "'");
    }
    if (cfg.entries_.count(key)) {
      throw ConfigError(where + "duplicate key '" + key + "'");
    }
    cfg.entries_[key] = {value, lineno};
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  return parse(in, path.string());
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& keys = known_keys();
  if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
    throw ConfigError("unknown key '" + key + "'");
  }
  entries_[key] = {value, 0};
}

void RunConfig::fail(const std::string& key, const std::string& what) const {
  const auto& e = entries_.at(key);
  if (e.line == 0) {
    throw ConfigError("flag for '" + key + "': " + what + " (got '" + e.value + "')");
  }
  throw ConfigError(source_ + ":" + std::to_string(e.line) + ": key '" + key +
                    "': " + what + " (got '" + e.value + "')");
}

std::string RunConfig::get_string(const std::string& key,
                                  const std::string& fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second.value;
}

std::int64_t RunConfig::get_int(const std::string& key,
                                std::int64_t fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::int64_t v = 0;
  if (!parse_int64(it->second.value, v)) fail(key, "expected an integer");
  return v;
}

double RunConfig::get_real(const std::string& key, double fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  double v = 0.0;
  if (!parse_real(it->second.value, v) || std::isnan(v)) {
    fail(key, "expected a number");
  }
  return v;
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  const auto& v = it->second.value;
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  fail(key, "expected true or false");
}

std::vector<double> RunConfig::get_reals(const std::string& key) const {
  std::vector<double> out;
  auto it = entries_.find(key);
  if (it == entries_.end()) return out;
  for (auto tok : split_fields(it->second.value, ',')) {
    double v = 0.0;
    if (!parse_real(tok, v) || std::isnan(v)) {
      fail(key, "expected a number or comma-separated numbers");
    }
    out.push_back(v);
  }
  return out;
}

Hyperparams RunConfig::hyperparams() const {
  Hyperparams hp;
  auto int32 = [&](const std::string& key, std::int32_t fallback) {
    const auto v = get_int(key, fallback);
    if (v < 0 || v > 1'000'000'000) fail(key, "out of range");
    return static_cast<std::int32_t>(v);
  };
  hp.K = int32("K", hp.K);
  hp.L = int32("L", hp.L);
  auto broadcast = [&](const std::string& key, std::int32_t n) {
    auto v = get_reals(key);
    if (v.size() == 1) v.assign(n, v[0]);
    if (!v.empty() && static_cast<std::int32_t>(v.size()) != n) {
      fail(key, "expected 1 or " + std::to_string(n) + " values");
    }
    return v;
  };
  hp.alpha = broadcast("alpha", hp.K);
  hp.c_c = broadcast("c_c", hp.L);
  hp.c_u = broadcast("c_u", hp.L);
  hp.d_c = get_real("d_c", hp.d_c);
  hp.lambda1 = get_real("lambda1", hp.lambda1);
  hp.lambda0 = get_real("lambda0", hp.lambda0);
  if (has("m_shape")) hp.m_shape = get_real("m_shape", 0.0);
  hp.iterations = int32("iterations", hp.iterations);
  hp.burn_in = int32("burn_in", hp.burn_in);
  const auto seed = get_int("seed", static_cast<std::int64_t>(hp.seed));
  if (seed < 0) fail("seed", "must be non-negative");
  hp.seed = static_cast<std::uint64_t>(seed);
  hp.resample_dc = get_bool("resample_dc", hp.resample_dc);
  return hp;
}

} // namespace rdbn::cli
