#include <cstdio>
#include <fstream>

#include "doctest.h"

#include "amx/config.hpp"
#include "amx/experiment.hpp"
#include "amx/plot.hpp"

using namespace amx;

TEST_CASE("kv parsing with comments and overrides") {
  auto kv = KvConfig::parse_text(
      "# experiment\n"
      "mixup.method = anchored   # the core method\n"
      "mixup.beta = 1.1\n"
      "\n"
      "trainer.epochs = 3\n");
  CHECK(kv.get_str("mixup.method", "") == "anchored");
  CHECK(kv.get_f64("mixup.beta", 0.0) == 1.1);
  CHECK(kv.get_i64("trainer.epochs", 0) == 3);
  CHECK(kv.get_i64("trainer.batch_size", 64) == 64);  // default passthrough
  CHECK_THROWS_AS(KvConfig::parse_text("just a line\n"), ValueError);
  CHECK_THROWS_AS(kv.get_i64("mixup.beta", 0), ValueError);
}

TEST_CASE("unknown keys are rejected") {
  auto kv = KvConfig::parse_text("mixup.betta = 1.1\n");
  CHECK_THROWS_AS(config_from_kv(kv), ValueError);
  // sweep.* keys are reserved for grid files and tolerated
  auto kv2 = KvConfig::parse_text("sweep.betas = 1,2\nmixup.beta = 1.1\n");
  CHECK_NOTHROW(config_from_kv(kv2));
}

TEST_CASE("config hash is stable under key permutation") {
  auto a = KvConfig::parse_text("mixup.beta = 1.1\ntrainer.epochs = 3\nseed = 9\n");
  auto b = KvConfig::parse_text("seed = 9\ntrainer.epochs = 3\nmixup.beta = 1.1\n");
  CHECK(config_hash(config_from_kv(a)) == config_hash(config_from_kv(b)));

  // explicit defaults hash like omitted defaults
  auto c = KvConfig::parse_text("mixup.beta = 1.1\ntrainer.epochs = 3\nseed = 9\n"
                                "trainer.momentum = 0.9\n");
  CHECK(config_hash(config_from_kv(a)) == config_hash(config_from_kv(c)));

  auto d = KvConfig::parse_text("mixup.beta = 1.2\ntrainer.epochs = 3\nseed = 9\n");
  CHECK(config_hash(config_from_kv(a)) != config_hash(config_from_kv(d)));
}

TEST_CASE("config round trip preserves every field") {
  auto kv = KvConfig::parse_text(
      "seed = 7\nseeds = 5\nworkers = 2\nout_dir = out\n"
      "dataset.source = synth1d\ndataset.synth_fn = cubic\ndataset.target_shift = 2\n"
      "model.kind = mlp\nmodel.hidden = 32,16\nmodel.z_dim = 8\n"
      "trainer.lr = 0.001\ntrainer.epochs = 4\ntrainer.weight_penalty = lasso\n"
      "mixup.method = anchored\nmixup.beta = 20\nmixup.lambda = 1e-05\n"
      "mixup.guard = batch\nmixup.reduction = listing\n");
  auto cfg = config_from_kv(kv);
  auto cfg2 = config_from_kv(config_to_kv(cfg));
  CHECK(config_to_kv(cfg).canonical() == config_to_kv(cfg2).canonical());
  CHECK(cfg2.mixup.guard == GuardMode::batch);
  CHECK(cfg2.mixup.reduction == PenaltyReduction::listing);
  CHECK(cfg2.trainer.weight_penalty == WeightPenalty::lasso);
  CHECK(cfg2.dataset.synth_fn == "cubic");
  CHECK(cfg2.model.hidden == std::vector<int64_t>{32, 16});
}

TEST_CASE("format_f64 round-trips exactly") {
  for (double v : {1e-4, 0.1, 1.0 / 3.0, 1.1, 20.0, 49.05, 1e-300})
    CHECK(std::stod(format_f64(v)) == v);
}

TEST_CASE("dataset_kv selects only dataset keys") {
  ExperimentConfig cfg;
  auto kv = dataset_kv(cfg);
  CHECK(kv.has("dataset.source"));
  CHECK_FALSE(kv.has("mixup.beta"));
  CHECK_FALSE(kv.has("seed"));
}

TEST_CASE("record json round trip") {
  ExperimentRecord rec;
  rec.config_hash = "abc123";
  rec.seed = 42;
  rec.method = "anchored";
  rec.beta = 1.1;
  rec.lambda = 1e-4;
  rec.alpha = 1.0;
  rec.arch = "mlp;in=1;hidden=8;z=4";
  rec.best_epoch = 1;
  rec.train_mae_at_best = 0.5;
  rec.test_mae_at_best = 0.75;
  rec.wallclock_s = 1.25;
  rec.epochs = {{0.9, 0.8, 0.85, 0.01, 0.0, 0.1}, {0.5, 0.5, 0.75, 0.02, 0.1, 0.1}};
  rec.bins = {{0.0f, 1.0, 10, true}, {90.0f, 2.0, 10, false}};
  rec.config_echo = {{"mixup.method", "anchored"}};

  const std::string path = "record_test.json";
  write_record_json(path, rec);
  auto back = read_record_json(path);
  CHECK(back.config_hash == rec.config_hash);
  CHECK(back.seed == rec.seed);
  CHECK(back.method == rec.method);
  CHECK(back.best_epoch == rec.best_epoch);
  CHECK(back.test_mae_at_best == rec.test_mae_at_best);
  REQUIRE(back.epochs.size() == 2);
  CHECK(back.epochs[1].skipped_ratio == 0.1);
  REQUIRE(back.bins.size() == 2);
  CHECK(back.bins[1].target == 90.0f);
  CHECK(back.bins[1].kept == false);
  CHECK(back.config_echo == rec.config_echo);
  std::remove(path.c_str());

  CHECK_THROWS_AS(read_record_json("missing_record.json"), IoError);
}

TEST_CASE("runs csv appends with a single header") {
  const std::string path = "runs_test.csv";
  std::remove(path.c_str());
  ExperimentRecord rec;
  rec.config_hash = "h1";
  rec.method = "none";
  rec.seed = 1;
  rec.train_mae_at_best = 0.5;
  rec.test_mae_at_best = 0.6;
  append_runs_csv(path, rec);
  rec.seed = 2;
  append_runs_csv(path, rec);
  std::ifstream is(path);
  std::string line;
  int lines = 0, headers = 0;
  while (std::getline(is, line)) {
    ++lines;
    if (line.rfind("config_hash,", 0) == 0) ++headers;
  }
  CHECK(lines == 3);
  CHECK(headers == 1);
  std::remove(path.c_str());
}

namespace {

ExperimentRecord record_with_bins(const std::string& method,
                                  const std::vector<BinStat>& bins) {
  ExperimentRecord rec;
  rec.method = method;
  rec.bins = bins;
  return rec;
}

}  // namespace

TEST_CASE("curve assembly, bands, and csv") {
  std::vector<BinStat> bins = {
      {0.0f, 1.0, 5, true},  {1.0f, 1.5, 5, true},  {2.0f, 3.0, 5, false},
      {3.0f, 2.5, 5, false}, {4.0f, 1.2, 5, true},  {5.0f, 1.1, 5, true},
      {6.0f, 4.0, 5, false},
  };
  auto curve = curve_from_records(
      {record_with_bins("none", bins), record_with_bins("anchored", bins)});
  CHECK(curve.series.size() == 2);
  CHECK(curve.targets.size() == 7);

  auto bands = kept_bands(curve);
  REQUIRE(bands.size() == 2);  // kept runs: [0,1] and [4,5]
  CHECK(bands[0] == std::pair<float, float>{0.0f, 1.0f});
  CHECK(bands[1] == std::pair<float, float>{4.0f, 5.0f});

  const std::string path = "curve_test.csv";
  write_curve_csv(path, curve);
  std::ifstream is(path);
  std::string line;
  int rows = 0;
  std::getline(is, line);
  CHECK(line == "target,kept,mae_none,mae_anchored");
  while (std::getline(is, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 7);  // one CSV row per bin
  std::remove(path.c_str());

  // mismatched bins across records must be rejected
  auto other = bins;
  other.pop_back();
  CHECK_THROWS_AS(curve_from_records({record_with_bins("none", bins),
                                      record_with_bins("anchored", other)}),
                  ValueError);
}

TEST_CASE("bmp rendering writes a plausible file") {
  std::vector<BinStat> bins;
  for (int i = 0; i < 20; ++i)
    bins.push_back({static_cast<float>(i), 1.0 + 0.1 * i, 3, i % 4 < 2});
  auto curve = curve_from_records({record_with_bins("none", bins)});
  const std::string path = "curve_test.bmp";
  render_curve_bmp(path, curve, 320, 200);
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  char magic[2];
  is.read(magic, 2);
  CHECK(magic[0] == 'B');
  CHECK(magic[1] == 'M');
  is.seekg(0, std::ios::end);
  CHECK(is.tellg() > 320 * 200 * 3 / 2);
  std::remove(path.c_str());
}

TEST_CASE("sweep produces rows plus a pivot that matches its rows") {
  ExperimentConfig base;
  base.dataset.source = "synth1d";
  base.dataset.synth_n = 64;
  base.dataset.synth_test_n = 32;
  base.dataset.target_shift = 2.0;
  base.model.kind = "mlp";
  base.model.hidden = {6};
  base.model.z_dim = 3;
  base.trainer.epochs = 2;
  base.trainer.batch_size = 16;
  base.trainer.lr = 0.02;

  const std::string rows_path = "sweep_rows_test.csv";
  auto sweep = run_sweep(base, {0.5, 1.1}, {1e-4, 1e-2}, {1, 2}, 2, rows_path);
  CHECK(sweep.rows.size() == 8);
  for (const auto& row : sweep.rows) CHECK(row.status == "ok");

  // pivot cell equals the mean of its rows, recomputed independently
  for (size_t bi = 0; bi < 2; ++bi)
    for (size_t li = 0; li < 2; ++li) {
      double sum = 0.0;
      int n = 0;
      for (const auto& row : sweep.rows)
        if (row.beta == sweep.betas[bi] && row.lambda == sweep.lambdas[li]) {
          sum += row.test_mae;
          ++n;
        }
      CHECK(n == 2);
      CHECK(sweep.pivot[bi][li] == doctest::Approx(sum / n).epsilon(1e-12));
    }

  std::ifstream is(rows_path);
  std::string line;
  int rows = -1;  // header
  while (std::getline(is, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 8);
  std::remove(rows_path.c_str());

  const std::string pivot_path = "sweep_pivot_test.csv";
  write_sweep_pivot_csv(pivot_path, sweep);
  std::ifstream ps(pivot_path);
  int plines = 0;
  while (std::getline(ps, line))
    if (!line.empty()) ++plines;
  CHECK(plines == 3);  // header + 2 beta rows
  std::remove(pivot_path.c_str());
}

TEST_CASE("prepare_data assembles the OOD protocol") {
  ExperimentConfig cfg;
  cfg.dataset.source = "glyphs";
  cfg.dataset.angle_count = 24;
  cfg.dataset.per_angle = 3;
  cfg.dataset.test_per_angle = 2;
  cfg.dataset.slice_width = 6;
  cfg.dataset.keep_width = 6;
  cfg.dataset.pool = 16;
  cfg.dataset.test_pool = 8;
  cfg.dataset.image_side = 12;
  auto data = prepare_data(cfg);
  CHECK(data.kept_targets.size() == 12);
  CHECK(data.removed_targets.size() == 12);
  CHECK(data.train.size() == 12 * 3);
  CHECK(data.test.size() == 24 * 2);
  // the defining OOD property: removed targets only ever appear in the test set
  for (float t : data.train.targets)
    CHECK(std::binary_search(data.kept_targets.begin(), data.kept_targets.end(), t));
  std::vector<float> test_targets(data.test.targets);
  std::sort(test_targets.begin(), test_targets.end());
  for (float t : data.removed_targets)
    CHECK(std::binary_search(test_targets.begin(), test_targets.end(), t));
}
