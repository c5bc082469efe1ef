#include "amx/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "amx/error.hpp"

namespace amx {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, ',')) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

}  // namespace

KvConfig KvConfig::parse_text(const std::string& text) {
  KvConfig kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValueError("config line " + std::to_string(lineno) +
                       " is not of the form key = value: '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ValueError("config line " + std::to_string(lineno) + " has an empty key");
    kv.values[key] = value;
  }
  return kv;
}

KvConfig KvConfig::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_text(ss.str());
}

std::string KvConfig::get_str(const std::string& key, const std::string& def) const {
  auto it = values.find(key);
  return it == values.end() ? def : it->second;
}

int64_t KvConfig::get_i64(const std::string& key, int64_t def) const {
  auto it = values.find(key);
  if (it == values.end()) return def;
  try {
    size_t pos = 0;
    const int64_t v = std::stoll(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ValueError("config key " + key + " expects an integer, got '" +
                     it->second + "'");
  }
}

uint64_t KvConfig::get_u64(const std::string& key, uint64_t def) const {
  const int64_t v = get_i64(key, static_cast<int64_t>(def));
  if (v < 0) throw ValueError("config key " + key + " must be non-negative");
  return static_cast<uint64_t>(v);
}

double KvConfig::get_f64(const std::string& key, double def) const {
  auto it = values.find(key);
  if (it == values.end()) return def;
  try {
    size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ValueError("config key " + key + " expects a number, got '" + it->second +
                     "'");
  }
}

bool KvConfig::get_bool(const std::string& key, bool def) const {
  auto it = values.find(key);
  if (it == values.end()) return def;
  if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
  if (it->second == "false" || it->second == "0" || it->second == "no") return false;
  throw ValueError("config key " + key + " expects a boolean, got '" + it->second +
                   "'");
}

std::vector<int64_t> KvConfig::get_i64_list(const std::string& key,
                                            const std::vector<int64_t>& def) const {
  auto it = values.find(key);
  if (it == values.end()) return def;
  std::vector<int64_t> out;
  for (const auto& item : split_list(it->second)) {
    try {
      out.push_back(std::stoll(item));
    } catch (const std::exception&) {
      throw ValueError("config key " + key + " expects integers, got '" + item + "'");
    }
  }
  return out;
}

std::vector<double> KvConfig::get_f64_list(const std::string& key,
                                           const std::vector<double>& def) const {
  auto it = values.find(key);
  if (it == values.end()) return def;
  std::vector<double> out;
  for (const auto& item : split_list(it->second)) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ValueError("config key " + key + " expects numbers, got '" + item + "'");
    }
  }
  return out;
}

std::string KvConfig::canonical() const {
  std::ostringstream os;
  for (const auto& [k, v] : values) os << k << "=" << v << "\n";
  return os.str();
}

std::string fnv1a_hex(const std::string& data) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

std::string KvConfig::hash() const { return fnv1a_hex(canonical()); }

std::string format_f64(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  // use the shortest representation that round-trips
  for (int prec = 1; prec < 17; ++prec) {
    char probe[32];
    std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
    if (std::stod(probe) == v) return probe;
  }
  return buf;
}

namespace {

const std::set<std::string> kKnownKeys = {
    "seed", "out_dir", "seeds", "workers",
    "dataset.source", "dataset.seed", "dataset.angle_count", "dataset.per_angle",
    "dataset.test_per_angle", "dataset.slice", "dataset.slice_width",
    "dataset.keep_width", "dataset.target_shift", "dataset.pool",
    "dataset.test_pool", "dataset.image_side", "dataset.data_dir",
    "dataset.synth_fn", "dataset.synth_n", "dataset.synth_test_n",
    "dataset.synth_noise",
    "model.kind", "model.channels", "model.z_dim", "model.hidden",
    "trainer.lr", "trainer.momentum", "trainer.batch_size", "trainer.epochs",
    "trainer.weight_penalty", "trainer.weight_lambda",
    "mixup.method", "mixup.beta", "mixup.lambda", "mixup.alpha", "mixup.guard",
    "mixup.reduction",
};

GuardMode parse_guard(const std::string& s) {
  if (s == "per_pair") return GuardMode::per_pair;
  if (s == "batch") return GuardMode::batch;
  throw ValueError("mixup.guard expects per_pair|batch, got '" + s + "'");
}

PenaltyReduction parse_reduction(const std::string& s) {
  if (s == "per_pair") return PenaltyReduction::per_pair;
  if (s == "listing") return PenaltyReduction::listing;
  throw ValueError("mixup.reduction expects per_pair|listing, got '" + s + "'");
}

}  // namespace

ExperimentConfig config_from_kv(const KvConfig& kv) {
  for (const auto& [k, v] : kv.values) {
    if (k.rfind("sweep.", 0) == 0) continue;
    if (!kKnownKeys.count(k)) throw ValueError("unknown config key '" + k + "'");
  }
  ExperimentConfig cfg;
  cfg.seed = kv.get_u64("seed", cfg.seed);
  cfg.out_dir = kv.get_str("out_dir", cfg.out_dir);
  cfg.seeds = static_cast<int>(kv.get_i64("seeds", cfg.seeds));
  cfg.workers = static_cast<int>(kv.get_i64("workers", cfg.workers));

  auto& d = cfg.dataset;
  d.source = kv.get_str("dataset.source", d.source);
  d.seed = kv.get_u64("dataset.seed", d.seed);
  d.angle_count = kv.get_i64("dataset.angle_count", d.angle_count);
  d.per_angle = kv.get_i64("dataset.per_angle", d.per_angle);
  d.test_per_angle = kv.get_i64("dataset.test_per_angle", d.test_per_angle);
  d.slice = kv.get_bool("dataset.slice", d.slice);
  d.slice_width = kv.get_i64("dataset.slice_width", d.slice_width);
  d.keep_width = kv.get_i64("dataset.keep_width", d.keep_width);
  d.target_shift = kv.get_f64("dataset.target_shift", d.target_shift);
  d.pool = kv.get_i64("dataset.pool", d.pool);
  d.test_pool = kv.get_i64("dataset.test_pool", d.test_pool);
  d.image_side = kv.get_i64("dataset.image_side", d.image_side);
  d.data_dir = kv.get_str("dataset.data_dir", d.data_dir);
  d.synth_fn = kv.get_str("dataset.synth_fn", d.synth_fn);
  d.synth_n = kv.get_i64("dataset.synth_n", d.synth_n);
  d.synth_test_n = kv.get_i64("dataset.synth_test_n", d.synth_test_n);
  d.synth_noise = kv.get_f64("dataset.synth_noise", d.synth_noise);
  if (d.source != "glyphs" && d.source != "mnist" && d.source != "synth1d")
    throw ValueError("dataset.source expects glyphs|mnist|synth1d, got '" + d.source +
                     "'");
  if (d.synth_fn != "sine" && d.synth_fn != "cubic")
    throw ValueError("dataset.synth_fn expects sine|cubic, got '" + d.synth_fn + "'");

  auto& m = cfg.model;
  m.kind = kv.get_str("model.kind", m.kind);
  m.channels = kv.get_i64_list("model.channels", m.channels);
  m.z_dim = kv.get_i64("model.z_dim", m.z_dim);
  m.hidden = kv.get_i64_list("model.hidden", m.hidden);
  if (m.kind != "cnn" && m.kind != "mlp")
    throw ValueError("model.kind expects cnn|mlp, got '" + m.kind + "'");

  auto& t = cfg.trainer;
  t.lr = kv.get_f64("trainer.lr", t.lr);
  t.momentum = kv.get_f64("trainer.momentum", t.momentum);
  t.batch_size = kv.get_i64("trainer.batch_size", t.batch_size);
  t.epochs = kv.get_i64("trainer.epochs", t.epochs);
  t.weight_penalty = parse_weight_penalty(kv.get_str("trainer.weight_penalty", "none"));
  t.weight_lambda = kv.get_f64("trainer.weight_lambda", t.weight_lambda);
  if (t.batch_size < 1) throw ValueError("trainer.batch_size must be >= 1");
  if (t.epochs < 1) throw ValueError("trainer.epochs must be >= 1");
  if (cfg.seeds < 1) throw ValueError("seeds must be >= 1");

  auto& x = cfg.mixup;
  x.method = parse_mixup_method(kv.get_str("mixup.method", "none"));
  x.beta = kv.get_f64("mixup.beta", x.beta);
  x.lambda = kv.get_f64("mixup.lambda", x.lambda);
  x.alpha = kv.get_f64("mixup.alpha", x.alpha);
  x.guard = parse_guard(kv.get_str("mixup.guard", "per_pair"));
  x.reduction = parse_reduction(kv.get_str("mixup.reduction", "per_pair"));
  x.validate();
  return cfg;
}

KvConfig config_to_kv(const ExperimentConfig& cfg) {
  KvConfig kv;
  kv.set("seed", std::to_string(cfg.seed));
  kv.set("out_dir", cfg.out_dir);
  kv.set("seeds", std::to_string(cfg.seeds));
  kv.set("workers", std::to_string(cfg.workers));

  const auto& d = cfg.dataset;
  kv.set("dataset.source", d.source);
  kv.set("dataset.seed", std::to_string(d.seed));
  kv.set("dataset.angle_count", std::to_string(d.angle_count));
  kv.set("dataset.per_angle", std::to_string(d.per_angle));
  kv.set("dataset.test_per_angle", std::to_string(d.test_per_angle));
  kv.set("dataset.slice", d.slice ? "true" : "false");
  kv.set("dataset.slice_width", std::to_string(d.slice_width));
  kv.set("dataset.keep_width", std::to_string(d.keep_width));
  kv.set("dataset.target_shift", format_f64(d.target_shift));
  kv.set("dataset.pool", std::to_string(d.pool));
  kv.set("dataset.test_pool", std::to_string(d.test_pool));
  kv.set("dataset.image_side", std::to_string(d.image_side));
  kv.set("dataset.data_dir", d.data_dir);
  kv.set("dataset.synth_fn", d.synth_fn);
  kv.set("dataset.synth_n", std::to_string(d.synth_n));
  kv.set("dataset.synth_test_n", std::to_string(d.synth_test_n));
  kv.set("dataset.synth_noise", format_f64(d.synth_noise));

  const auto& m = cfg.model;
  kv.set("model.kind", m.kind);
  kv.set("model.channels", detail::join_i64(m.channels, ','));
  kv.set("model.z_dim", std::to_string(m.z_dim));
  kv.set("model.hidden", detail::join_i64(m.hidden, ','));

  const auto& t = cfg.trainer;
  kv.set("trainer.lr", format_f64(t.lr));
  kv.set("trainer.momentum", format_f64(t.momentum));
  kv.set("trainer.batch_size", std::to_string(t.batch_size));
  kv.set("trainer.epochs", std::to_string(t.epochs));
  kv.set("trainer.weight_penalty", t.weight_penalty == WeightPenalty::none
                                       ? "none"
                                       : (t.weight_penalty == WeightPenalty::ridge
                                              ? "ridge"
                                              : "lasso"));
  kv.set("trainer.weight_lambda", format_f64(t.weight_lambda));

  const auto& x = cfg.mixup;
  kv.set("mixup.method", to_string(x.method));
  kv.set("mixup.beta", format_f64(x.beta));
  kv.set("mixup.lambda", format_f64(x.lambda));
  kv.set("mixup.alpha", format_f64(x.alpha));
  kv.set("mixup.guard", x.guard == GuardMode::per_pair ? "per_pair" : "batch");
  kv.set("mixup.reduction",
         x.reduction == PenaltyReduction::per_pair ? "per_pair" : "listing");
  return kv;
}

std::string config_hash(const ExperimentConfig& cfg) { return config_to_kv(cfg).hash(); }

KvConfig dataset_kv(const ExperimentConfig& cfg) {
  KvConfig all = config_to_kv(cfg);
  KvConfig out;
  for (const auto& [k, v] : all.values)
    if (k.rfind("dataset.", 0) == 0) out.values[k] = v;
  return out;
}

}  // namespace amx
