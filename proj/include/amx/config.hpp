#pragma once

// Experiment configuration: a flat human-readable `key = value` file with
// dotted section prefixes. Unknown keys are rejected; the canonical
// serialization (sorted keys, normalized values, defaults filled in) is what
// gets hashed, so semantically identical configs share a hash.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "amx/regularizer.hpp"
#include "amx/trainer.hpp"

namespace amx {

struct KvConfig {
  std::map<std::string, std::string> values;

  static KvConfig parse_text(const std::string& text);
  static KvConfig parse_file(const std::string& path);

  bool has(const std::string& key) const { return values.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { values[key] = value; }

  std::string get_str(const std::string& key, const std::string& def) const;
  int64_t get_i64(const std::string& key, int64_t def) const;
  uint64_t get_u64(const std::string& key, uint64_t def) const;
  double get_f64(const std::string& key, double def) const;
  bool get_bool(const std::string& key, bool def) const;
  std::vector<int64_t> get_i64_list(const std::string& key,
                                    const std::vector<int64_t>& def) const;
  std::vector<double> get_f64_list(const std::string& key,
                                   const std::vector<double>& def) const;

  /// Sorted `key=value` lines; the hashing input.
  std::string canonical() const;
  /// FNV-1a 64-bit hash of the canonical form, as 16 hex chars.
  std::string hash() const;
};

std::string fnv1a_hex(const std::string& data);

/// Format a double so that parsing it back recovers the exact value.
std::string format_f64(double v);

struct DatasetSettings {
  std::string source = "glyphs";  // glyphs | mnist | synth1d
  uint64_t seed = 1;
  // rotation protocol
  int64_t angle_count = 360;
  int64_t per_angle = 20;
  int64_t test_per_angle = 4;
  bool slice = true;
  int64_t slice_width = 100;
  int64_t keep_width = 80;
  double target_shift = 1.0;  // keeps y_j away from 0 in the penalty
  // glyph pools
  int64_t pool = 2000;
  int64_t test_pool = 600;
  int64_t image_side = 28;
  // mnist idx
  std::string data_dir = "data";
  // synthetic 1-d
  std::string synth_fn = "sine";
  int64_t synth_n = 2048;
  int64_t synth_test_n = 512;
  double synth_noise = 0.05;
};

struct ExperimentConfig {
  uint64_t seed = 1;
  std::string out_dir = "runs";
  int seeds = 1;    // runs per experiment (seed, seed+1, ...)
  int workers = 0;  // 0 = hardware concurrency
  DatasetSettings dataset;
  ModelSpec model;
  TrainSettings trainer;
  MixupConfig mixup;
};

/// Builds the config from parsed key-values. Rejects unknown keys (keys with
/// a `sweep.` prefix are reserved for grid files and ignored here) and
/// validates ranges.
ExperimentConfig config_from_kv(const KvConfig& kv);

/// Full canonical key-value form, defaults included.
KvConfig config_to_kv(const ExperimentConfig& cfg);

std::string config_hash(const ExperimentConfig& cfg);

/// Subset of the canonical form that determines dataset construction; names
/// the dataset cache entries.
KvConfig dataset_kv(const ExperimentConfig& cfg);

}  // namespace amx
