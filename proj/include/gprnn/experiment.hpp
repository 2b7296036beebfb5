// Experiment orchestration: sweeps over (dynamics x mapping x family x
// seed) cells, per-cell training and evaluation, metrics emission and
// markdown summary tables.
#pragma once

#include <atomic>
#include <iostream>
#include <mutex>
#include <thread>

#include "gprnn/checkpoint.hpp"
#include "gprnn/config.hpp"
#include "gprnn/dataset.hpp"
#include "gprnn/metrics.hpp"

namespace gprnn {

struct MetricRecord {
  std::string metric;
  double value = 0.0;
  int dimension = -1;  // -1 when not per-dimension
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string cell;  // "dyn/map/family"

  json to_json() const {
    json j{{"metric", metric}, {"value", value}, {"seed", seed},
           {"config_hash", config_hash}, {"cell", cell}};
    if (dimension >= 0) j["dimension"] = dimension;
    return j;
  }
};

struct ExperimentResult {
  std::vector<MetricRecord> records;
  std::vector<std::string> failures;  // "cell seed=..: error"
};

namespace detail {

struct CellSpec {
  std::string dyn, map_kind, family;
  std::uint64_t seed;
};

inline void eval_latent_recovery(const LatentTrajectory& est_train,
                                 const LatentTrajectory& est_test,
                                 const Dataset& ds, int train_T, int test_T,
                                 const CellSpec& cell,
                                 const std::string& hash,
                                 std::vector<MetricRecord>& out) {
  if (ds.latents.empty()) return;
  std::string cname = cell.dyn + "/" + cell.map_kind + "/" + cell.family;
  const Matrix& truth = ds.latents.front();
  Matrix truth_train = truth.leftCols(train_T);
  out.push_back({"rmse_train", rmse_aligned(est_train, truth_train), -1,
                 cell.seed, hash, cname});
  auto [map, aligned] = affine_align(est_train, truth_train);
  for (int d = 0; d < truth_train.rows(); ++d)
    out.push_back({"r2_train",
                   r_squared(aligned.row(d).transpose(),
                             truth_train.row(d).transpose()),
                   d, cell.seed, hash, cname});
  if (est_test.cols() > 0 && truth.cols() >= train_T + test_T) {
    Matrix truth_test = truth.middleCols(train_T, test_T);
    out.push_back({"rmse_test", rmse_aligned(est_test, truth_test), -1,
                   cell.seed, hash, cname});
  }
}

}  // namespace detail

// Runs one sweep cell; throws on failure (the sweep driver records it).
inline std::vector<MetricRecord> run_cell(const ExperimentConfig& cfg,
                                          const Dataset& ds,
                                          const detail::CellSpec& cell,
                                          const fs::path& out_dir) {
  std::string hash = config_hash(cfg, cell.dyn, cell.map_kind, cell.family);
  std::string cname = cell.dyn + "/" + cell.map_kind + "/" + cell.family;
  std::vector<MetricRecord> recs;

  fs::path cell_dir = out_dir /
      (cell.dyn + "_" + cell.map_kind + "_" + cell.family + "_s" +
       std::to_string(cell.seed));
  fs::create_directories(cell_dir);
  std::ofstream report_out(cell_dir / "report.ndjson");
  IterCallback cb = [&](const TrainIterRecord& r) {
    json j{{"iteration", r.iter}, {"objective", r.objective},
           {"grad_norm", r.grad_norm}, {"elapsed_seconds", r.elapsed_s}};
    report_out << j.dump() << '\n';
  };

  if (cfg.observation == "poisson") {
    ModelConfig m = cfg.model_for(cell.dyn, cell.map_kind, ds.neurons);
    TrainConfig tc = cfg.train_for(cell.seed);
    int ntr = cfg.train_trials > 0
                  ? std::min<int>(cfg.train_trials, ds.trials.size())
                  : static_cast<int>(ds.trials.size());
    std::vector<ObservationMatrix> train_trials(ds.trials.begin(),
                                                ds.trials.begin() + ntr);
    // Poisson trials train on the full window
    PoissonTrainResult fit = train_poisson_map(train_trials, m, tc, cb);
    recs.push_back({"joint_log_prob", fit.report.best_objective, -1,
                    cell.seed, hash, cname});
    LatentTrajectory z0 = fit.params.get(trial_seg("z", 0));
    detail::eval_latent_recovery(z0, Matrix(z0.rows(), 0), ds,
                                 static_cast<int>(z0.cols()), 0, cell,
                                 hash, recs);
    Checkpoint ck{fit.params, hash};
    save_checkpoint(ck, (cell_dir / "checkpoint.json").string());
    return recs;
  }

  // Gaussian variational path: split the single-trial time axis
  int T = ds.timesteps;
  int test_T = std::min(cfg.test_T, T);
  int train_T = cfg.train_T > 0 ? cfg.train_T : T - test_T;
  if (train_T < 1) throw Error("run_cell: no training window");
  ModelConfig m = cfg.model_for(cell.dyn, cell.map_kind, ds.neurons);
  EncoderConfig enc{family_from_name(cell.family), cfg.latent_dim,
                    ds.neurons, train_T, cfg.hidden};
  TrainConfig tc = cfg.train_for(cell.seed);
  ObservationMatrix x_train;
  x_train.kind = ObsKind::Real;
  x_train.values = ds.trials.front().values.leftCols(train_T);
  TrainResult fit = train_gaussian(x_train, m, enc, tc, nullptr, nullptr, 0,
                                   cb);
  recs.push_back({"elbo", fit.report.best_objective, -1, cell.seed, hash,
                  cname});

  ObservationMatrix x_eval = x_train;
  if (m.mapping == MappingKind::Gp)
    x_eval.values = x_eval.values.colwise() -
                    Vector(x_eval.values.rowwise().mean());
  VariationalPosterior post = variational_encode(fit.params, enc, x_eval);
  LatentTrajectory z_test =
      forecast_latents(fit.params, m, post.mu, test_T);
  detail::eval_latent_recovery(post.mu, z_test, ds, train_T, test_T, cell,
                               hash, recs);
  Checkpoint ck{fit.params, hash, true, fit.adam, fit.next_iter};
  save_checkpoint(ck, (cell_dir / "checkpoint.json").string());
  return recs;
}

inline int worker_count() {
  const char* env = std::getenv("GPRNN_WORKERS");
  if (!env) return 1;
  int n = std::atoi(env);
  return n < 1 ? 1 : n;
}

inline void write_metrics(const ExperimentResult& res,
                          const fs::path& out_dir) {
  std::ofstream mj(out_dir / "metrics.jsonl");
  for (const auto& r : res.records) mj << r.to_json().dump() << '\n';

  // markdown summary: cell x metric medians over seeds
  std::map<std::pair<std::string, std::string>, std::vector<double>> by_cell;
  for (const auto& r : res.records)
    if (r.dimension < 0) by_cell[{r.cell, r.metric}].push_back(r.value);
  std::ofstream md(out_dir / "table.md");
  md << "| cell | metric | median | stderr | n |\n"
     << "|---|---|---|---|---|\n";
  for (auto& [key, vals] : by_cell) {
    std::sort(vals.begin(), vals.end());
    double med = vals[vals.size() / 2];
    double mean = 0, sq = 0;
    for (double v : vals) mean += v;
    mean /= vals.size();
    for (double v : vals) sq += (v - mean) * (v - mean);
    double se = vals.size() > 1
                    ? std::sqrt(sq / (vals.size() - 1) / vals.size())
                    : 0.0;
    md << "| " << key.first << " | " << key.second << " | " << med
       << " | " << se << " | " << vals.size() << " |\n";
  }
}

// Full sweep. Cell failures are recorded and the sweep continues; the
// caller maps a non-empty failure list to a nonzero exit code.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  Dataset ds = load_dataset(cfg.data_dir);
  fs::path out_dir(cfg.out_dir);
  fs::create_directories(out_dir);

  std::vector<detail::CellSpec> cells;
  for (const auto& dyn : cfg.dynamics)
    for (const auto& mk : cfg.mapping)
      for (const auto& fam :
           cfg.observation == "poisson" ? std::vector<std::string>{"map"}
                                        : cfg.families)
        for (auto seed : cfg.seeds) cells.push_back({dyn, mk, fam, seed});

  ExperimentResult res;
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  int workers = std::min<int>(worker_count(), cells.size());
  auto work = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      try {
        auto recs = run_cell(cfg, ds, cells[i], out_dir);
        std::lock_guard<std::mutex> lk(mu);
        res.records.insert(res.records.end(), recs.begin(), recs.end());
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lk(mu);
        res.failures.push_back(cells[i].dyn + "/" + cells[i].map_kind +
                               "/" + cells[i].family + " seed=" +
                               std::to_string(cells[i].seed) + ": " +
                               e.what());
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  write_metrics(res, out_dir);
  return res;
}

}  // namespace gprnn
