// amx - anchored hidden-state mixup training lab.
//
// Subcommands: prepare, train, sweep, plot, report.
// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric abort.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "amx/config.hpp"
#include "amx/error.hpp"
#include "amx/experiment.hpp"
#include "amx/plot.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

amx::ExperimentConfig load_config(const std::string& path,
                                  const std::vector<std::string>& overrides,
                                  uint64_t seed_override, bool has_seed_override,
                                  const std::string& out_override) {
  amx::KvConfig kv = amx::KvConfig::parse_file(path);
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos)
      throw amx::ValueError("--set expects key=value, got '" + item + "'");
    kv.set(item.substr(0, eq), item.substr(eq + 1));
  }
  if (const char* env_dir = std::getenv("AMX_DATA_DIR"))
    kv.set("dataset.data_dir", env_dir);
  amx::ExperimentConfig cfg = amx::config_from_kv(kv);
  if (has_seed_override) cfg.seed = seed_override;
  if (!out_override.empty()) cfg.out_dir = out_override;
  return cfg;
}

int auto_workers(int configured) {
  if (configured > 0) return configured;
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

struct CachePaths {
  std::string train, test, sidecar;
};

CachePaths cache_paths(const amx::ExperimentConfig& cfg) {
  const std::string id = amx::dataset_kv(cfg).hash();
  const std::string dir = cfg.out_dir + "/cache";
  return {dir + "/" + id + ".train.amx", dir + "/" + id + ".test.amx",
          dir + "/" + id + ".json"};
}

bool cache_valid(const amx::ExperimentConfig& cfg, const CachePaths& paths) {
  if (!fs::exists(paths.train) || !fs::exists(paths.test) || !fs::exists(paths.sidecar))
    return false;
  std::ifstream is(paths.sidecar);
  if (!is) return false;
  nlohmann::json j;
  try {
    is >> j;
  } catch (...) {
    return false;
  }
  return j.value("dataset_hash", "") == amx::dataset_kv(cfg).hash();
}

void write_sidecar(const amx::ExperimentConfig& cfg, const CachePaths& paths,
                   const amx::PreparedData& data) {
  nlohmann::json j;
  j["dataset_hash"] = amx::dataset_kv(cfg).hash();
  j["seed"] = cfg.dataset.seed;
  j["n_train"] = data.train.size();
  j["n_test"] = data.test.size();
  j["target_shift"] = data.target_shift;
  nlohmann::json c = nlohmann::json::object();
  for (const auto& [k, v] : amx::dataset_kv(cfg).values) c[k] = v;
  j["config"] = c;
  std::ofstream os(paths.sidecar, std::ios::trunc);
  if (!os) throw amx::IoError("cannot write sidecar " + paths.sidecar);
  os << j.dump(2) << "\n";
}

std::vector<float> unique_sorted_targets(const amx::Dataset& d) {
  std::vector<float> u(d.targets);
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  return u;
}

amx::PreparedData load_cached(const amx::ExperimentConfig& cfg, const CachePaths& paths) {
  amx::PreparedData data;
  data.train = amx::read_dataset_cache(paths.train);
  data.test = amx::read_dataset_cache(paths.test);
  data.target_shift = static_cast<float>(cfg.dataset.target_shift);
  data.kept_targets = unique_sorted_targets(data.train);
  for (float t : unique_sorted_targets(data.test))
    if (!std::binary_search(data.kept_targets.begin(), data.kept_targets.end(), t))
      data.removed_targets.push_back(t);
  return data;
}

amx::PreparedData obtain_data(const amx::ExperimentConfig& cfg) {
  const CachePaths paths = cache_paths(cfg);
  if (cache_valid(cfg, paths)) {
    std::cout << "using cached dataset " << paths.train << "\n";
    return load_cached(cfg, paths);
  }
  return amx::prepare_data(cfg);
}

int cmd_prepare(const amx::ExperimentConfig& cfg) {
  const CachePaths paths = cache_paths(cfg);
  if (cache_valid(cfg, paths)) {
    std::cout << "cache hit: " << paths.train << " (no rewrite)\n";
    return kExitOk;
  }
  fs::create_directories(cfg.out_dir + "/cache");
  amx::PreparedData data = amx::prepare_data(cfg);
  amx::write_dataset_cache(paths.train, data.train);
  amx::write_dataset_cache(paths.test, data.test);
  write_sidecar(cfg, paths, data);
  std::cout << "prepared " << data.train.size() << " train / " << data.test.size()
            << " test samples -> " << paths.train << "\n";
  return kExitOk;
}

int cmd_train(const amx::ExperimentConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  amx::PreparedData data = obtain_data(cfg);
  const std::string hash = amx::config_hash(cfg);
  const int workers = auto_workers(cfg.workers);
  amx::SeedSummary sum =
      amx::run_seeds(data, cfg.model, cfg.trainer, cfg.mixup, cfg.seed, cfg.seeds,
                     workers, cfg.out_dir + "/" + hash);
  const amx::KvConfig echo = amx::config_to_kv(cfg);
  for (auto& rec : sum.records) {
    rec.config_hash = hash;
    rec.config_echo.assign(echo.values.begin(), echo.values.end());
    const std::string stem =
        cfg.out_dir + "/" + hash + "_seed" + std::to_string(rec.seed);
    amx::write_record_json(stem + ".json", rec);
    amx::append_runs_csv(cfg.out_dir + "/runs.csv", rec);
  }
  std::cout << "method=" << amx::to_string(cfg.mixup.method) << " seeds=" << cfg.seeds
            << " test_mae=" << sum.mean_test_mae << " +- " << sum.std_test_mae
            << " (train " << sum.mean_train_mae << " +- " << sum.std_train_mae
            << ")\n";
  std::cout << "records under " << cfg.out_dir << "/" << hash << "_seed*.json\n";
  return kExitOk;
}

int cmd_sweep(const std::string& grid_path, const std::vector<std::string>& overrides) {
  amx::KvConfig kv = amx::KvConfig::parse_file(grid_path);
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos)
      throw amx::ValueError("--set expects key=value, got '" + item + "'");
    kv.set(item.substr(0, eq), item.substr(eq + 1));
  }
  const auto betas = kv.get_f64_list("sweep.betas", {});
  const auto lambdas = kv.get_f64_list("sweep.lambdas", {});
  std::vector<uint64_t> seeds;
  for (int64_t s : kv.get_i64_list("sweep.seeds", {}))
    seeds.push_back(static_cast<uint64_t>(s));
  amx::ExperimentConfig base = amx::config_from_kv(kv);
  fs::create_directories(base.out_dir);

  amx::SweepResult res =
      amx::run_sweep(base, betas, lambdas, seeds, auto_workers(base.workers),
                     base.out_dir + "/sweep.csv");
  amx::write_sweep_pivot_csv(base.out_dir + "/sweep_pivot.csv", res);
  int failures = 0;
  for (const auto& row : res.rows)
    if (row.status != "ok") ++failures;
  std::cout << "sweep: " << res.rows.size() << " runs (" << failures
            << " failed) -> " << base.out_dir << "/sweep.csv, sweep_pivot.csv\n";
  return kExitOk;
}

int cmd_plot(const std::vector<std::string>& record_paths, const std::string& out_prefix) {
  std::vector<amx::ExperimentRecord> recs;
  recs.reserve(record_paths.size());
  for (const auto& p : record_paths) recs.push_back(amx::read_record_json(p));
  amx::CurveData curve = amx::curve_from_records(recs);
  amx::write_curve_csv(out_prefix + ".csv", curve);
  amx::render_curve_bmp(out_prefix + ".bmp", curve);
  std::cout << "wrote " << out_prefix << ".csv and " << out_prefix << ".bmp ("
            << curve.targets.size() << " bins, " << curve.series.size()
            << " series)\n";
  return kExitOk;
}

struct ReportKey {
  std::string method;
  std::string beta, lambda, alpha;
  bool operator<(const ReportKey& o) const {
    return std::tie(method, beta, lambda, alpha) <
           std::tie(o.method, o.beta, o.lambda, o.alpha);
  }
};

int cmd_report(const std::string& runs_path, const std::string& out_path) {
  std::ifstream is(runs_path);
  if (!is) throw amx::IoError("cannot open " + runs_path);
  std::string line;
  if (!std::getline(is, line)) throw amx::IoError(runs_path + " is empty");
  std::map<ReportKey, std::vector<std::pair<double, double>>> groups;  // (train, test)
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string cur;
    std::istringstream ls(line);
    while (std::getline(ls, cur, ',')) f.push_back(cur);
    if (f.size() < 9) throw amx::IoError("malformed runs.csv row: " + line);
    groups[{f[1], f[2], f[3], f[4]}].emplace_back(std::stod(f[6]), std::stod(f[7]));
  }
  auto mean_std = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - m) * (x - m);
    const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
    return std::make_pair(m, sd);
  };
  std::ostringstream table;
  table << "method,beta,lambda,alpha,runs,train_mae_mean,train_mae_std,"
           "test_mae_mean,test_mae_std\n";
  for (const auto& [key, rows] : groups) {
    std::vector<double> train, test;
    for (const auto& [tr, te] : rows) {
      train.push_back(tr);
      test.push_back(te);
    }
    const auto [trm, trs] = mean_std(train);
    const auto [tem, tes] = mean_std(test);
    table << key.method << "," << key.beta << "," << key.lambda << "," << key.alpha
          << "," << rows.size() << "," << trm << "," << trs << "," << tem << ","
          << tes << "\n";
  }
  std::cout << table.str();
  if (!out_path.empty()) {
    std::ofstream os(out_path, std::ios::trunc);
    if (!os) throw amx::IoError("cannot open " + out_path + " for writing");
    os << table.str();
    std::cout << "wrote " << out_path << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"anchored hidden-state mixup training lab"};
  app.require_subcommand(1);

  std::string config_path, grid_path, out_dir, out_prefix = "curve";
  std::string runs_path = "runs/runs.csv", report_out;
  std::vector<std::string> overrides, record_paths;
  uint64_t seed_override = 0;
  bool has_seed = false;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    if (needs_config)
      sub->add_option("--config", config_path, "experiment config file")->required();
    sub->add_option("--set", overrides, "override a config key (key=value)");
  };

  CLI::App* prepare = app.add_subcommand("prepare", "build and cache the dataset");
  add_common(prepare, true);

  CLI::App* train = app.add_subcommand("train", "run the configured experiment");
  add_common(train, true);
  train
      ->add_option("--seed", seed_override, "override the base seed")
      ->each([&](const std::string&) { has_seed = true; });
  train->add_option("--out", out_dir, "override the output directory");

  CLI::App* sweep = app.add_subcommand("sweep", "beta x lambda x seed grid");
  sweep->add_option("--grid", grid_path, "grid config file")->required();
  sweep->add_option("--set", overrides, "override a grid key (key=value)");

  CLI::App* plot = app.add_subcommand("plot", "error-vs-target curve artifacts");
  plot->add_option("--out", out_prefix, "output prefix for .csv/.bmp");
  plot->add_option("records", record_paths, "experiment record JSON files")
      ->required();

  CLI::App* report = app.add_subcommand("report", "aggregate runs.csv");
  report->add_option("--runs", runs_path, "runs.csv path");
  report->add_option("--out", report_out, "also write the table to this CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (prepare->parsed())
      return cmd_prepare(load_config(config_path, overrides, 0, false, ""));
    if (train->parsed())
      return cmd_train(load_config(config_path, overrides, seed_override, has_seed, out_dir));
    if (sweep->parsed()) return cmd_sweep(grid_path, overrides);
    if (plot->parsed()) return cmd_plot(record_paths, out_prefix);
    if (report->parsed()) return cmd_report(runs_path, report_out);
  } catch (const amx::NumericAbort& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const amx::IoError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const amx::ValueError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const amx::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
