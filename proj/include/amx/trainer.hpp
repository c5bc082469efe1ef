#pragma once

// Training loop for the dual-loader procedure: per pair-batch, the empirical
// risks of both batches are averaged and the configured regularization term
// (anchored penalty, or a mixup-style replacement of the first term) is
// folded into the batch-i risk before the mean, matching
//   ERM = [l(f(x_i), y_i) + w|d|, l(f(x_j), y_j)];  loss = mean(ERM).

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "amx/dataset.hpp"
#include "amx/model.hpp"
#include "amx/regularizer.hpp"
#include "amx/tensor.hpp"

namespace amx {

/// Mean absolute deviation, mean_k |pred_k - target_k|, differentiable.
template <typename T>
TensorT<T> l1_loss(const TensorT<T>& pred, const TensorT<T>& target) {
  if (pred.size() != target.size())
    throw ShapeError("l1_loss length mismatch: " + shape_str(pred.shape()) + " vs " +
                     shape_str(target.shape()));
  auto t = target;
  if (pred.shape() != target.shape()) t = reshape(target, pred.shape());
  return mean(abs(sub(pred, t)));
}

/// SGD with classical momentum: v <- mu v + g, p <- p - lr v.
class Sgd {
 public:
  Sgd(std::vector<Tensor>& params, double lr, double momentum);

  void zero_grad();
  void step();

  double lr() const { return lr_; }
  double momentum() const { return momentum_; }

 private:
  std::vector<Tensor> params_;  // shared handles onto the model's leaves
  std::vector<std::vector<float>> velocity_;
  double lr_;
  double momentum_;
};

enum class WeightPenalty { none, ridge, lasso };

WeightPenalty parse_weight_penalty(const std::string& s);

struct TrainSettings {
  double lr = 1e-2;
  double momentum = 0.9;
  int64_t batch_size = 64;
  int64_t epochs = 30;
  WeightPenalty weight_penalty = WeightPenalty::none;
  double weight_lambda = 1e-4;
};

struct EpochStats {
  double train_loss = 0.0;     // mean optimized objective over the epoch
  double train_mae = 0.0;      // evaluation-mode MAE on the training subset
  double test_mae = 0.0;
  double penalty_mean = 0.0;   // mean anchored penalty over batches
  double skipped_ratio = 0.0;  // guarded-out pairs / total pairs
  double train_seconds = 0.0;  // optimization loop only (no evaluation)
};

struct BinStat {
  float target = 0.0f;
  double mae = 0.0;
  int64_t count = 0;
  bool kept = true;
};

struct ExperimentRecord {
  std::string config_hash;
  uint64_t seed = 0;
  std::string method;
  double beta = 0.0, lambda = 0.0, alpha = 0.0;
  std::string arch;
  std::vector<EpochStats> epochs;
  int best_epoch = -1;  // argmin train MAE (the reporting checkpoint)
  double train_mae_at_best = 0.0;
  double test_mae_at_best = 0.0;
  std::vector<BinStat> bins;  // per-target test MAE at the best checkpoint
  double wallclock_s = 0.0;
  std::vector<std::pair<std::string, std::string>> config_echo;
};

/// Evaluation-mode MAE over a dataset, reported in raw target units.
/// `target_shift` must match what the training loader applied.
double mae(const SplitModel& model, const Dataset& data, float target_shift = 0.0f,
           int64_t batch_size = 256);

/// Per-unique-target MAE (the error-vs-angle curve data).
std::vector<BinStat> per_target_mae(const SplitModel& model, const Dataset& data,
                                    std::span<const float> kept_targets,
                                    float target_shift = 0.0f,
                                    int64_t batch_size = 256);

/// One pass over the pair stream. Throws NumericAbort if the loss goes
/// non-finite, carrying (epoch, batch, penalty, skipped ratio) diagnostics.
EpochStats train_epoch(SplitModel& model, PairLoader& loader, const MixupConfig& mix,
                       Sgd& opt, std::mt19937_64& rng, int epoch_index,
                       WeightPenalty weight_penalty = WeightPenalty::none,
                       double weight_lambda = 0.0);

struct PreparedData {
  Dataset train;
  Dataset test;
  std::vector<float> kept_targets;     // sorted unique (equals all when no slicing)
  std::vector<float> removed_targets;  // sorted unique
  float target_shift = 0.0f;
};

struct ModelSpec {
  std::string kind = "cnn";  // cnn | mlp
  std::vector<int64_t> channels{8, 16, 32};
  int64_t z_dim = 32;
  std::vector<int64_t> hidden{64};
};

SplitModel build_model(const ModelSpec& spec, const Shape& input_shape,
                       std::mt19937_64& rng);

/// Full training run on prepared data. The reported test MAE belongs to the
/// epoch with the lowest training MAE (the paper-style selection rule).
/// When `checkpoint_prefix` is non-empty, `<prefix>.best.amx` is refreshed
/// whenever the training MAE improves and `<prefix>.last.amx` on every epoch.
ExperimentRecord run_experiment(const PreparedData& data, const ModelSpec& model_spec,
                                const TrainSettings& train, const MixupConfig& mix,
                                uint64_t run_seed,
                                const std::string& checkpoint_prefix = "");

struct SeedSummary {
  std::vector<ExperimentRecord> records;
  double mean_test_mae = 0.0;
  double std_test_mae = 0.0;  // sample standard deviation, 0 when k == 1
  double mean_train_mae = 0.0;
  double std_train_mae = 0.0;
};

/// Runs k seeds (base_seed + 0..k-1), optionally in parallel; the aggregate
/// is independent of scheduling. Records are ordered by seed. A non-empty
/// `checkpoint_stem` yields per-run prefixes `<stem>_seed<seed>`.
SeedSummary run_seeds(const PreparedData& data, const ModelSpec& model_spec,
                      const TrainSettings& train, const MixupConfig& mix,
                      uint64_t base_seed, int k, int workers = 1,
                      const std::string& checkpoint_stem = "");

}  // namespace amx
