#pragma once

// Experiment assembly on top of the trainer: dataset preparation from a
// config, record/CSV serialization, and the sweep runner.

#include <string>
#include <vector>

#include "amx/config.hpp"
#include "amx/trainer.hpp"

namespace amx {

/// Builds the train/test datasets named by the config (no caching here).
PreparedData prepare_data(const ExperimentConfig& cfg);

void write_record_json(const std::string& path, const ExperimentRecord& rec);
ExperimentRecord read_record_json(const std::string& path);

/// Appends one row (creating the header when the file is new) with columns:
/// config_hash,method,beta,lambda,alpha,seed,train_mae,test_mae,wallclock_s
void append_runs_csv(const std::string& path, const ExperimentRecord& rec);

struct SweepRow {
  double beta = 0.0;
  double lambda = 0.0;
  uint64_t seed = 0;
  std::string config_hash;
  std::string status = "ok";  // or "error: ..."
  double train_mae = 0.0;
  double test_mae = 0.0;
  double wallclock_s = 0.0;
};

struct SweepResult {
  std::vector<double> betas;
  std::vector<double> lambdas;
  std::vector<SweepRow> rows;  // one per (beta, lambda, seed), grid order
  /// pivot[b][l] = mean test MAE over the ok rows of that cell (NaN if none)
  std::vector<std::vector<double>> pivot;
};

/// Cartesian sweep over beta x lambda x seeds with a bounded worker pool.
/// Failed runs become status rows; the sweep continues.
SweepResult run_sweep(const ExperimentConfig& base, const std::vector<double>& betas,
                      const std::vector<double>& lambdas,
                      const std::vector<uint64_t>& seeds, int workers,
                      const std::string& rows_csv_path = "");

void write_sweep_pivot_csv(const std::string& path, const SweepResult& sweep);

}  // namespace amx
