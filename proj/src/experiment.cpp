#include "amx/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "amx/error.hpp"
#include "amx/random.hpp"

#include "json.hpp"

namespace amx {

namespace {

std::vector<float> unique_sorted(const std::vector<float>& v) {
  std::vector<float> u(v);
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  return u;
}

}  // namespace

PreparedData prepare_data(const ExperimentConfig& cfg) {
  const auto& d = cfg.dataset;
  PreparedData out;
  out.target_shift = static_cast<float>(d.target_shift);

  if (d.source == "synth1d") {
    const SynthFn fn = d.synth_fn == "sine" ? SynthFn::sine : SynthFn::cubic;
    auto train_rng = derive_rng(d.seed, 100);
    auto test_rng = derive_rng(d.seed, 101);
    out.train = synth_smooth_regression(fn, d.synth_n, d.synth_noise, train_rng);
    out.test = synth_smooth_regression(fn, d.synth_test_n, d.synth_noise, test_rng);
    out.kept_targets = unique_sorted(out.train.targets);
    return out;
  }

  ImagePool train_pool, test_pool;
  if (d.source == "glyphs") {
    train_pool = make_glyph_pool(d.pool, splitmix64(d.seed ^ 0x5eedULL), d.image_side);
    test_pool =
        make_glyph_pool(d.test_pool, splitmix64(d.seed ^ 0x7e57ULL), d.image_side);
  } else {  // mnist
    train_pool = pool_from_idx(load_idx_images(d.data_dir + "/train-images-idx3-ubyte"));
    test_pool = pool_from_idx(load_idx_images(d.data_dir + "/t10k-images-idx3-ubyte"));
  }

  auto train_rng = derive_rng(d.seed, 10);
  auto test_rng = derive_rng(d.seed, 11);
  Dataset full_train =
      build_rotation_dataset(train_pool, d.angle_count, d.per_angle, train_rng);
  out.test = build_rotation_dataset(test_pool, d.angle_count, d.test_per_angle, test_rng);

  if (d.slice) {
    SliceResult sliced =
        apply_slice_removal(full_train, {d.slice_width, d.keep_width});
    out.train = std::move(sliced.train);
    out.kept_targets = std::move(sliced.kept_targets);
    out.removed_targets = std::move(sliced.removed_targets);
  } else {
    out.train = std::move(full_train);
    out.kept_targets = unique_sorted(out.train.targets);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Record serialization
// ---------------------------------------------------------------------------

void write_record_json(const std::string& path, const ExperimentRecord& rec) {
  nlohmann::json j;
  j["config_hash"] = rec.config_hash;
  j["seed"] = rec.seed;
  j["method"] = rec.method;
  j["beta"] = rec.beta;
  j["lambda"] = rec.lambda;
  j["alpha"] = rec.alpha;
  j["arch"] = rec.arch;
  j["best_epoch"] = rec.best_epoch;
  j["train_mae_at_best"] = rec.train_mae_at_best;
  j["test_mae_at_best"] = rec.test_mae_at_best;
  j["wallclock_s"] = rec.wallclock_s;
  j["epochs"] = nlohmann::json::array();
  for (const auto& e : rec.epochs)
    j["epochs"].push_back({{"train_loss", e.train_loss},
                           {"train_mae", e.train_mae},
                           {"test_mae", e.test_mae},
                           {"penalty_mean", e.penalty_mean},
                           {"skipped_ratio", e.skipped_ratio},
                           {"train_seconds", e.train_seconds}});
  j["bins"] = nlohmann::json::array();
  for (const auto& b : rec.bins)
    j["bins"].push_back({{"target", b.target},
                         {"mae", b.mae},
                         {"count", b.count},
                         {"kept", b.kept}});
  nlohmann::json cfg = nlohmann::json::object();
  for (const auto& [k, v] : rec.config_echo) cfg[k] = v;
  j["config"] = cfg;

  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << j.dump(2) << "\n";
}

ExperimentRecord read_record_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open record file " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("cannot parse record file " + path + ": " + e.what());
  }
  ExperimentRecord rec;
  rec.config_hash = j.value("config_hash", "");
  rec.seed = j.value("seed", uint64_t{0});
  rec.method = j.value("method", "");
  rec.beta = j.value("beta", 0.0);
  rec.lambda = j.value("lambda", 0.0);
  rec.alpha = j.value("alpha", 0.0);
  rec.arch = j.value("arch", "");
  rec.best_epoch = j.value("best_epoch", -1);
  rec.train_mae_at_best = j.value("train_mae_at_best", 0.0);
  rec.test_mae_at_best = j.value("test_mae_at_best", 0.0);
  rec.wallclock_s = j.value("wallclock_s", 0.0);
  for (const auto& e : j.value("epochs", nlohmann::json::array())) {
    EpochStats es;
    es.train_loss = e.value("train_loss", 0.0);
    es.train_mae = e.value("train_mae", 0.0);
    es.test_mae = e.value("test_mae", 0.0);
    es.penalty_mean = e.value("penalty_mean", 0.0);
    es.skipped_ratio = e.value("skipped_ratio", 0.0);
    es.train_seconds = e.value("train_seconds", 0.0);
    rec.epochs.push_back(es);
  }
  for (const auto& b : j.value("bins", nlohmann::json::array())) {
    BinStat bs;
    bs.target = b.value("target", 0.0f);
    bs.mae = b.value("mae", 0.0);
    bs.count = b.value("count", int64_t{0});
    bs.kept = b.value("kept", true);
    rec.bins.push_back(bs);
  }
  if (j.contains("config"))
    for (const auto& [k, v] : j["config"].items())
      rec.config_echo.emplace_back(k, v.get<std::string>());
  return rec;
}

void append_runs_csv(const std::string& path, const ExperimentRecord& rec) {
  bool need_header = true;
  {
    std::ifstream probe(path);
    need_header = !probe || probe.peek() == std::ifstream::traits_type::eof();
  }
  std::ofstream os(path, std::ios::app);
  if (!os) throw IoError("cannot open " + path + " for appending");
  if (need_header)
    os << "config_hash,method,beta,lambda,alpha,seed,train_mae,test_mae,wallclock_s\n";
  os << rec.config_hash << "," << rec.method << "," << format_f64(rec.beta) << ","
     << format_f64(rec.lambda) << "," << format_f64(rec.alpha) << "," << rec.seed
     << "," << format_f64(rec.train_mae_at_best) << ","
     << format_f64(rec.test_mae_at_best) << "," << format_f64(rec.wallclock_s)
     << "\n";
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

SweepResult run_sweep(const ExperimentConfig& base, const std::vector<double>& betas,
                      const std::vector<double>& lambdas,
                      const std::vector<uint64_t>& seeds, int workers,
                      const std::string& rows_csv_path) {
  if (betas.empty() || lambdas.empty() || seeds.empty())
    throw ValueError("sweep grid must list betas, lambdas and seeds");
  SweepResult res;
  res.betas = betas;
  res.lambdas = lambdas;
  res.rows.resize(betas.size() * lambdas.size() * seeds.size());

  const PreparedData data = prepare_data(base);

  struct Task {
    size_t row;
    double beta;
    double lambda;
    uint64_t seed;
  };
  std::vector<Task> tasks;
  tasks.reserve(res.rows.size());
  size_t r = 0;
  for (double b : betas)
    for (double l : lambdas)
      for (uint64_t s : seeds) tasks.push_back({r++, b, l, s});

  std::mutex csv_mutex;
  std::ofstream csv;
  if (!rows_csv_path.empty()) {
    csv.open(rows_csv_path, std::ios::trunc);
    if (!csv) throw IoError("cannot open " + rows_csv_path + " for writing");
    csv << "config_hash,beta,lambda,seed,status,train_mae,test_mae,wallclock_s\n";
  }

  std::atomic<size_t> next{0};
  const int nw = std::max(1, workers);
  auto worker = [&] {
    for (;;) {
      const size_t t = next.fetch_add(1);
      if (t >= tasks.size()) return;
      const Task& task = tasks[t];
      ExperimentConfig cfg = base;
      cfg.mixup.method = MixupMethod::anchored;
      cfg.mixup.beta = task.beta;
      cfg.mixup.lambda = task.lambda;
      cfg.seed = task.seed;
      SweepRow row;
      row.beta = task.beta;
      row.lambda = task.lambda;
      row.seed = task.seed;
      row.config_hash = config_hash(cfg);
      try {
        ExperimentRecord rec =
            run_experiment(data, cfg.model, cfg.trainer, cfg.mixup, task.seed);
        row.train_mae = rec.train_mae_at_best;
        row.test_mae = rec.test_mae_at_best;
        row.wallclock_s = rec.wallclock_s;
      } catch (const std::exception& e) {
        row.status = std::string("error: ") + e.what();
      }
      if (csv.is_open()) {
        std::lock_guard<std::mutex> lock(csv_mutex);
        csv << row.config_hash << "," << format_f64(row.beta) << ","
            << format_f64(row.lambda) << "," << row.seed << "," << row.status << ","
            << format_f64(row.train_mae) << "," << format_f64(row.test_mae) << ","
            << format_f64(row.wallclock_s) << "\n";
        csv.flush();
      }
      res.rows[task.row] = std::move(row);
    }
  };
  std::vector<std::thread> pool;
  for (int i = 0; i < nw; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  // pivot: beta rows x lambda columns of mean test MAE over ok seeds
  res.pivot.assign(betas.size(), std::vector<double>(lambdas.size(),
                                                     std::numeric_limits<double>::quiet_NaN()));
  for (size_t bi = 0; bi < betas.size(); ++bi)
    for (size_t li = 0; li < lambdas.size(); ++li) {
      double sum = 0.0;
      int n = 0;
      for (size_t si = 0; si < seeds.size(); ++si) {
        const SweepRow& row = res.rows[(bi * lambdas.size() + li) * seeds.size() + si];
        if (row.status == "ok") {
          sum += row.test_mae;
          ++n;
        }
      }
      if (n > 0) res.pivot[bi][li] = sum / n;
    }
  return res;
}

void write_sweep_pivot_csv(const std::string& path, const SweepResult& sweep) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "beta\\lambda";
  for (double l : sweep.lambdas) os << "," << format_f64(l);
  os << "\n";
  for (size_t bi = 0; bi < sweep.betas.size(); ++bi) {
    os << format_f64(sweep.betas[bi]);
    for (size_t li = 0; li < sweep.lambdas.size(); ++li) {
      const double v = sweep.pivot[bi][li];
      os << ",";
      if (std::isnan(v))
        os << "nan";
      else
        os << format_f64(v);
    }
    os << "\n";
  }
}

}  // namespace amx
