#include "amx/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <map>

#include "amx/error.hpp"
#include "amx/random.hpp"

namespace amx {

Sgd::Sgd(std::vector<Tensor>& params, double lr, double momentum)
    : params_(params), lr_(lr), momentum_(momentum) {
  velocity_.resize(params_.size());
  for (size_t i = 0; i < params_.size(); ++i)
    velocity_[i].assign(params_[i].values().size(), 0.0f);
}

void Sgd::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Sgd::step() {
  const float lr = static_cast<float>(lr_);
  const float mu = static_cast<float>(momentum_);
  for (size_t i = 0; i < params_.size(); ++i) {
    const auto& g = params_[i].grad();
    auto& v = velocity_[i];
    auto& p = params_[i].values_mut();
    for (size_t k = 0; k < p.size(); ++k) {
      v[k] = mu * v[k] + g[k];
      p[k] -= lr * v[k];
    }
  }
}

WeightPenalty parse_weight_penalty(const std::string& s) {
  if (s == "none") return WeightPenalty::none;
  if (s == "ridge") return WeightPenalty::ridge;
  if (s == "lasso") return WeightPenalty::lasso;
  throw ValueError("unknown weight penalty '" + s + "' (expected none|ridge|lasso)");
}

namespace {

struct EvalAccum {
  double abs_err_sum = 0.0;
  int64_t count = 0;
};

template <class PerSample>
void eval_pass(const SplitModel& model, const Dataset& data, float shift,
               int64_t batch_size, PerSample&& per_sample) {
  NoGradGuard eval_mode;
  const int64_t n = data.size();
  const int64_t per = data.sample_numel();
  for (int64_t start = 0; start < n; start += batch_size) {
    const int64_t b = std::min(batch_size, n - start);
    Shape xshape = data.input_shape;
    xshape.insert(xshape.begin(), b);
    std::vector<float> xv(data.inputs.begin() + static_cast<ptrdiff_t>(start * per),
                          data.inputs.begin() + static_cast<ptrdiff_t>((start + b) * per));
    auto pred = model.forward(Tensor::from(xshape, std::move(xv)));
    for (int64_t i = 0; i < b; ++i) {
      const float target = data.targets[static_cast<size_t>(start + i)];
      const double err = std::abs(static_cast<double>(pred.values()[static_cast<size_t>(i)]) -
                                  (static_cast<double>(target) + shift));
      per_sample(target, err);
    }
  }
}

}  // namespace

double mae(const SplitModel& model, const Dataset& data, float target_shift,
           int64_t batch_size) {
  if (data.size() == 0) throw ValueError("mae over an empty dataset");
  EvalAccum acc;
  eval_pass(model, data, target_shift, batch_size, [&](float, double err) {
    acc.abs_err_sum += err;
    ++acc.count;
  });
  return acc.abs_err_sum / static_cast<double>(acc.count);
}

std::vector<BinStat> per_target_mae(const SplitModel& model, const Dataset& data,
                                    std::span<const float> kept_targets,
                                    float target_shift, int64_t batch_size) {
  if (data.size() == 0) throw ValueError("per_target_mae over an empty dataset");
  std::map<float, EvalAccum> bins;
  eval_pass(model, data, target_shift, batch_size, [&](float target, double err) {
    auto& acc = bins[target];
    acc.abs_err_sum += err;
    ++acc.count;
  });
  std::vector<BinStat> out;
  out.reserve(bins.size());
  for (const auto& [target, acc] : bins) {
    BinStat b;
    b.target = target;
    b.mae = acc.abs_err_sum / static_cast<double>(acc.count);
    b.count = acc.count;
    b.kept = std::binary_search(kept_targets.begin(), kept_targets.end(), target);
    out.push_back(b);
  }
  return out;
}

EpochStats train_epoch(SplitModel& model, PairLoader& loader, const MixupConfig& mix,
                       Sgd& opt, std::mt19937_64& rng, int epoch_index,
                       WeightPenalty weight_penalty, double weight_lambda) {
  mix.validate();
  loader.next_epoch();
  const int64_t nb = loader.batches_per_epoch();
  EpochStats stats;
  int64_t pair_total = 0, pair_skipped = 0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int64_t k = 0; k < nb; ++k) {
    PairBatch pb = loader.make_batch(k);
    Tensor total;
    double penalty_val = 0.0;
    switch (mix.method) {
      case MixupMethod::none: {
        auto li = l1_loss(model.forward(pb.xi), pb.yi);
        auto lj = l1_loss(model.forward(pb.xj), pb.yj);
        total = mul(add(li, lj), 0.5f);
        break;
      }
      case MixupMethod::anchored: {
        auto zi = model.extract(pb.xi);
        auto zj = model.extract(pb.xj);
        auto li = l1_loss(model.predict_from_z(zi), pb.yi);
        auto lj = l1_loss(model.predict_from_z(zj), pb.yj);
        auto pr = anchored_mixup_penalty<float>(pb.yi.values(), pb.yj.values(), zi, zj, mix);
        penalty_val = pr.penalty.item();
        pair_total += pr.applied + pr.skipped;
        pair_skipped += pr.skipped;
        total = mul(add(add(li, pr.penalty), lj), 0.5f);
        break;
      }
      case MixupMethod::input_mixup: {
        // standard form: the step trains on the mixed batch alone
        auto mixed = input_mixup(pb.xi, pb.yi, pb.xj, pb.yj,
                                 static_cast<float>(mix.alpha), rng);
        total = l1_loss(model.forward(mixed.x), mixed.y);
        break;
      }
      case MixupMethod::manifold_mixup: {
        auto zi = model.extract(pb.xi);
        auto zj = model.extract(pb.xj);
        auto mixed = manifold_mixup(zi, pb.yi, zj, pb.yj,
                                    static_cast<float>(mix.alpha), rng);
        total = l1_loss(model.predict_from_z(mixed.z), mixed.y);
        break;
      }
    }
    if (weight_penalty != WeightPenalty::none)
      total = add(total, norm_penalty<float>(
                             model.params,
                             weight_penalty == WeightPenalty::ridge ? NormKind::ridge
                                                                    : NormKind::lasso,
                             static_cast<float>(weight_lambda)));
    const float loss_val = total.item();
    if (!std::isfinite(loss_val)) {
      const double skipped_ratio =
          pair_total > 0 ? static_cast<double>(pair_skipped) / pair_total : 0.0;
      throw NumericAbort("non-finite loss at epoch " + std::to_string(epoch_index) +
                             ", batch " + std::to_string(k) + " (penalty " +
                             std::to_string(penalty_val) + ", skipped ratio " +
                             std::to_string(skipped_ratio) + ")",
                         epoch_index, static_cast<int>(k), penalty_val, skipped_ratio);
    }
    opt.zero_grad();
    backward(total);
    opt.step();
    stats.train_loss += loss_val;
    stats.penalty_mean += penalty_val;
  }
  const auto t1 = std::chrono::steady_clock::now();
  stats.train_seconds = std::chrono::duration<double>(t1 - t0).count();
  if (nb > 0) {
    stats.train_loss /= static_cast<double>(nb);
    stats.penalty_mean /= static_cast<double>(nb);
  }
  stats.skipped_ratio =
      pair_total > 0 ? static_cast<double>(pair_skipped) / pair_total : 0.0;
  return stats;
}

SplitModel build_model(const ModelSpec& spec, const Shape& input_shape,
                       std::mt19937_64& rng) {
  if (spec.kind == "cnn") {
    if (input_shape.size() != 3)
      throw ValueError("cnn model needs an image input shape, got " +
                       shape_str(input_shape));
    return build_small_cnn<float>(input_shape, spec.channels, spec.z_dim, rng);
  }
  if (spec.kind == "mlp") {
    if (input_shape.size() != 1)
      throw ValueError("mlp model needs flat inputs, got " + shape_str(input_shape));
    return build_mlp<float>(input_shape[0], spec.hidden, spec.z_dim, rng);
  }
  throw ValueError("unknown model kind '" + spec.kind + "' (expected cnn|mlp)");
}

ExperimentRecord run_experiment(const PreparedData& data, const ModelSpec& model_spec,
                                const TrainSettings& train, const MixupConfig& mix,
                                uint64_t run_seed, const std::string& checkpoint_prefix) {
  if (train.epochs < 1) throw ValueError("training needs at least one epoch");
  const auto t0 = std::chrono::steady_clock::now();

  auto model_rng = derive_rng(run_seed, 1);
  auto mix_rng = derive_rng(run_seed, 2);
  SplitModel model = build_model(model_spec, data.train.input_shape, model_rng);
  Sgd opt(model.params, train.lr, train.momentum);
  PairLoader loader(data.train, train.batch_size, splitmix64(run_seed ^ 0x70a1c3u),
                    data.target_shift);

  ExperimentRecord rec;
  rec.seed = run_seed;
  rec.method = to_string(mix.method);
  rec.beta = mix.beta;
  rec.lambda = mix.lambda;
  rec.alpha = mix.alpha;
  rec.arch = model.arch;

  double best_train = std::numeric_limits<double>::infinity();
  std::vector<std::vector<float>> best_params;
  for (int64_t e = 0; e < train.epochs; ++e) {
    EpochStats es = train_epoch(model, loader, mix, opt, mix_rng,
                                static_cast<int>(e), train.weight_penalty,
                                train.weight_lambda);
    es.train_mae = mae(model, data.train, data.target_shift);
    es.test_mae = mae(model, data.test, data.target_shift);
    if (es.train_mae < best_train) {
      best_train = es.train_mae;
      best_params = model.param_values();
      rec.best_epoch = static_cast<int>(e);
      if (!checkpoint_prefix.empty())
        save_checkpoint(checkpoint_prefix + ".best.amx", model);
    }
    if (!checkpoint_prefix.empty())
      save_checkpoint(checkpoint_prefix + ".last.amx", model);
    rec.epochs.push_back(es);
  }
  model.set_param_values(best_params);
  rec.train_mae_at_best = best_train;
  rec.test_mae_at_best = rec.epochs[static_cast<size_t>(rec.best_epoch)].test_mae;
  rec.bins = per_target_mae(model, data.test, data.kept_targets, data.target_shift);

  const auto t1 = std::chrono::steady_clock::now();
  rec.wallclock_s = std::chrono::duration<double>(t1 - t0).count();
  return rec;
}

SeedSummary run_seeds(const PreparedData& data, const ModelSpec& model_spec,
                      const TrainSettings& train, const MixupConfig& mix,
                      uint64_t base_seed, int k, int workers,
                      const std::string& checkpoint_stem) {
  if (k < 1) throw ValueError("run_seeds needs k >= 1");
  SeedSummary sum;
  sum.records.resize(static_cast<size_t>(k));
  const int w = std::max(1, workers);
  for (int start = 0; start < k; start += w) {
    const int end = std::min(k, start + w);
    std::vector<std::future<ExperimentRecord>> futs;
    for (int i = start; i < end; ++i)
      futs.push_back(std::async(std::launch::async, [&, i] {
        const uint64_t seed = base_seed + static_cast<uint64_t>(i);
        const std::string prefix =
            checkpoint_stem.empty() ? "" : checkpoint_stem + "_seed" + std::to_string(seed);
        return run_experiment(data, model_spec, train, mix, seed, prefix);
      }));
    for (int i = start; i < end; ++i)
      sum.records[static_cast<size_t>(i)] = futs[static_cast<size_t>(i - start)].get();
  }

  auto aggregate = [&](auto getter, double& mean_out, double& std_out) {
    double mean = 0.0;
    for (const auto& r : sum.records) mean += getter(r);
    mean /= static_cast<double>(k);
    double var = 0.0;
    for (const auto& r : sum.records) {
      const double d = getter(r) - mean;
      var += d * d;
    }
    mean_out = mean;
    std_out = k > 1 ? std::sqrt(var / static_cast<double>(k - 1)) : 0.0;
  };
  aggregate([](const ExperimentRecord& r) { return r.test_mae_at_best; },
            sum.mean_test_mae, sum.std_test_mae);
  aggregate([](const ExperimentRecord& r) { return r.train_mae_at_best; },
            sum.mean_train_mae, sum.std_train_mae);
  return sum;
}

}  // namespace amx
