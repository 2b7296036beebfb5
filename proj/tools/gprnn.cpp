// Command-line driver: dataset simulation, experiment sweeps,
// checkpoint evaluation, co-smoothing, and gradient verification.
#include <iostream>

#include <CLI11.hpp>

#include "gprnn/experiment.hpp"

using namespace gprnn;

namespace {

// Checkpoints are self-describing: the segment names identify the
// dynamics, mapping and variational family they were trained with.
struct CheckpointShape {
  DynamicsKind dynamics = DynamicsKind::Rnn;
  MappingKind mapping = MappingKind::Gp;
  Family family = Family::BiLstm;
  bool has_encoder = false;
  bool poisson_map = false;  // per-trial F.k / z.k segments
  int latent_dim = 0;
  int hidden = 0;
  int trials = 0;  // Poisson MAP fits only
};

CheckpointShape inspect(const ParamVector& p) {
  CheckpointShape s;
  s.dynamics = p.has("rnn.Wx") ? DynamicsKind::Rnn : DynamicsKind::Ar1;
  s.mapping = p.has("gp.logrho") ? MappingKind::Gp : MappingKind::Nn;
  if (s.dynamics == DynamicsKind::Rnn) {
    s.latent_dim = p.segment("head.Wmu").rows;
    s.hidden = p.segment("rnn.Wh").cols;
  } else {
    s.latent_dim = p.segment("ar1.a").rows;
  }
  if (p.has("q.mu")) { s.family = Family::MF; s.has_encoder = true; }
  else if (p.has("vae.W1")) { s.family = Family::VAE; s.has_encoder = true; }
  else if (p.has("encl.Wx") && p.has("encr.Wx")) {
    s.family = Family::BiLstm; s.has_encoder = true;
  } else if (p.has("encl.Wx")) { s.family = Family::LLstm; s.has_encoder = true; }
  else if (p.has("encr.Wx")) { s.family = Family::RLstm; s.has_encoder = true; }
  while (p.has(trial_seg("F", s.trials))) ++s.trials;
  s.poisson_map = s.trials > 0;
  if (s.has_encoder && s.hidden == 0 && p.has("encl.Wh"))
    s.hidden = p.segment("encl.Wh").cols;
  return s;
}

ModelConfig model_from_shape(const CheckpointShape& s, int obs_dim) {
  ModelConfig m;
  m.dynamics = s.dynamics;
  m.mapping = s.mapping;
  m.observation = s.poisson_map ? ObsKind::Counts : ObsKind::Real;
  m.latent_dim = s.latent_dim;
  if (s.hidden > 0) m.hidden = s.hidden;
  m.obs_dim = obs_dim;
  return m;
}

// Long-format CSV (series,t,value) for external plotting.
void write_plot_csv(const fs::path& path, const std::string& prefix,
                    const Matrix& m) {
  std::ofstream out(path, std::ios::app);
  out.precision(10);
  for (int d = 0; d < m.rows(); ++d)
    for (int t = 0; t < m.cols(); ++t)
      out << prefix << d << ',' << t << ',' << m(d, t) << '\n';
}

int cmd_simulate(const std::string& out_dir, const std::string& mapping,
                 const std::string& obs, int neurons, int timesteps,
                 std::uint64_t seed, int trials, double noise,
                 int subsample) {
  ObsKind kind = obs == "poisson" ? ObsKind::Counts : ObsKind::Real;
  MappingSpec spec = MappingSpec::random(mapping_from_name(mapping), 3,
                                         neurons, seed, noise);
  LorenzParams lp;
  lp.subsample = subsample;
  Dataset ds;
  ds.kind = kind;
  ds.neurons = neurons;
  ds.timesteps = timesteps;
  ds.latent_dim_true = 3;
  ds.seed = seed;
  ds.mapping = mapping;
  Rng init_rng(Rng::mix(seed, 0xd5));
  for (int k = 0; k < trials; ++k) {
    Eigen::Vector3d z0{init_rng.uniform() * 20.0 - 10.0,
                       init_rng.uniform() * 20.0 - 10.0,
                       init_rng.uniform() * 30.0 + 5.0};
    LatentTrajectory z = lorenz_integrate(z0, lp, timesteps);
    TuningMatrix f = apply_mapping(z, spec);
    ds.trials.push_back(generate_observations(
        f, kind, noise, Rng::mix(seed, 0xab00 + k)));
    ds.latents.push_back(z);
  }
  save_dataset(out_dir, ds);
  std::cout << "wrote " << trials << " trial(s) to " << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir,
              const std::vector<std::string>& overrides) {
  ExperimentConfig cfg = load_config(config_path, overrides);
  if (!data_dir.empty()) cfg.data_dir = data_dir;
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (cfg.data_dir.empty()) {
    std::cerr << "train: no dataset (use --data or run.data)\n";
    return 2;
  }
  ExperimentResult res = run_experiment(cfg);
  std::cout << res.records.size() << " metric record(s), "
            << res.failures.size() << " failed cell(s)\n";
  for (const auto& f : res.failures) std::cerr << "FAILED " << f << "\n";
  return res.failures.empty() ? 0 : 1;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir,
             const std::string& plot_path) {
  Checkpoint ck = load_checkpoint(ckpt_path);
  Dataset ds = load_dataset(data_dir);
  CheckpointShape shape = inspect(ck.params);
  ModelConfig m = model_from_shape(shape, ds.neurons);
  json out;
  out["config_hash"] = ck.config_hash;
  out["latent_dim"] = shape.latent_dim;

  if (shape.poisson_map) {
    if (ds.kind != ObsKind::Counts)
      throw Error("eval: count-model checkpoint but dataset is gaussian");
    json per_trial = json::array();
    for (int k = 0; k < shape.trials; ++k) {
      LatentTrajectory z = ck.params.get(trial_seg("z", k));
      json rec{{"trial", k}};
      if (!ds.latents.empty() && k < static_cast<int>(ds.latents.size())) {
        const Matrix& truth = ds.latents[k].leftCols(z.cols());
        rec["rmse"] = rmse_aligned(z, truth);
        auto [map, aligned] = affine_align(z, truth);
        json r2 = json::array();
        for (int d = 0; d < truth.rows(); ++d)
          r2.push_back(r_squared(aligned.row(d).transpose(),
                                 truth.row(d).transpose()));
        rec["r2"] = r2;
      }
      per_trial.push_back(rec);
      if (!plot_path.empty()) write_plot_csv(plot_path, "z" + std::to_string(k) + "_", z);
    }
    out["trials"] = per_trial;
  } else {
    if (ds.kind != ObsKind::Real)
      throw Error("eval: gaussian-model checkpoint but dataset has counts");
    EncoderConfig enc{shape.family, shape.latent_dim, ds.neurons,
                      ds.timesteps,
                      shape.hidden > 0 ? shape.hidden : 30};
    if (shape.family == Family::MF)
      enc.timesteps = ck.params.segment("q.mu").cols;
    ObservationMatrix x = ds.trials.front();
    x.values = x.values.leftCols(enc.timesteps);
    out["elbo"] = elbo_estimate(ck.params, m, enc, x, 1, 0);
    ObservationMatrix x_eval = x;
    if (m.mapping == MappingKind::Gp)
      x_eval.values = x_eval.values.colwise() -
                      Vector(x_eval.values.rowwise().mean());
    VariationalPosterior post = variational_encode(ck.params, enc, x_eval);
    if (!ds.latents.empty()) {
      Matrix truth = ds.latents.front().leftCols(enc.timesteps);
      out["rmse"] = rmse_aligned(post.mu, truth);
      auto [map, aligned] = affine_align(post.mu, truth);
      json r2 = json::array();
      for (int d = 0; d < truth.rows(); ++d)
        r2.push_back(r_squared(aligned.row(d).transpose(),
                               truth.row(d).transpose()));
      out["r2"] = r2;
    }
    if (!plot_path.empty()) write_plot_csv(plot_path, "z_", post.mu);
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_cosmooth(const std::string& ckpt_path, const std::string& data_dir,
                 int dims, int infer_iters) {
  Checkpoint ck = load_checkpoint(ckpt_path);
  Dataset ds = load_dataset(data_dir);
  CheckpointShape shape = inspect(ck.params);
  if (!shape.poisson_map)
    throw Error("cosmooth: checkpoint has no per-trial tuning segments "
                "(count-model MAP fit required)");
  if (dims > 0 && dims != shape.latent_dim)
    throw Error("cosmooth: --dims " + std::to_string(dims) +
                " but checkpoint was trained with L=" +
                std::to_string(shape.latent_dim));
  if (shape.trials >= static_cast<int>(ds.trials.size()))
    throw Error("cosmooth: no test trials beyond the " +
                std::to_string(shape.trials) + " training trials");
  ModelConfig m = model_from_shape(shape, ds.neurons);

  PoissonTrainResult fit;
  fit.params = ck.params;
  fit.trials = shape.trials;
  CosmoothModel cm = cosmooth_model_from(fit, m);
  std::vector<ObservationMatrix> test(ds.trials.begin() + shape.trials,
                                      ds.trials.end());
  CosmoothConfig cc;
  cc.infer_iters = infer_iters;
  int N = ds.neurons;
  json per_neuron = json::array();
  double total = 0.0;
  for (int n = 0; n < N; ++n) {
    double r2 = cosmooth_r2(cm, test, n, cc);
    per_neuron.push_back(r2);
    total += r2;
  }
  json out{{"config_hash", ck.config_hash},
           {"latent_dim", shape.latent_dim},
           {"test_trials", test.size()},
           {"average_r2", total / N},
           {"per_neuron_r2", per_neuron}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
  // small random instances of both differentiable objectives
  int L = 2, T = 4, N = 3, H = 3;
  json out = json::array();
  bool ok = true;

  {
    ModelConfig m;
    m.latent_dim = L; m.hidden = H; m.obs_dim = N;
    EncoderConfig enc{Family::BiLstm, L, N, T, H};
    ParamVector p = make_gaussian_params(m, enc, seed);
    Rng rng(Rng::mix(seed, 1));
    Matrix x = rng.normal_matrix(N, T);
    Matrix eps = rng.normal_matrix(L, T);
    FiniteDiffReport rep = finite_diff_check(
        [&](Tape& tape, const ParamVars& vars) {
          return elbo_tape(tape, vars, m, enc, x, eps);
        },
        p, 1e-5, 1e-4);
    out.push_back({{"objective", "gaussian_elbo"},
                   {"max_relative_error", rep.max_relative_error},
                   {"pass", rep.pass}});
    ok = ok && rep.pass;
  }
  {
    ModelConfig m;
    m.observation = ObsKind::Counts;
    m.latent_dim = L; m.hidden = H; m.obs_dim = N;
    Rng rng(Rng::mix(seed, 2));
    ObservationMatrix x;
    x.kind = ObsKind::Counts;
    x.values = Matrix::Zero(N, T);
    for (int j = 0; j < T; ++j)
      for (int i = 0; i < N; ++i) x.values(i, j) = rng.poisson(2.0);
    std::vector<ObservationMatrix> trials{x};
    ParamVector p = make_poisson_params(m, trials, seed);
    FiniteDiffReport rep = finite_diff_check(
        [&](Tape& tape, const ParamVars& vars) {
          return poisson_joint_tape(tape, vars, m, trials, 1.0);
        },
        p, 1e-5, 1e-4);
    out.push_back({{"objective", "poisson_joint"},
                   {"max_relative_error", rep.max_relative_error},
                   {"pass", rep.pass}});
    ok = ok && rep.pass;
  }
  std::cout << out.dump(2) << "\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent dynamics discovery toolkit"};
  app.require_subcommand(1);

  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  std::string sim_out, sim_mapping = "sine", sim_obs = "gaussian";
  int sim_neurons = 50, sim_T = 200, sim_trials = 1, sim_subsample = 50;
  std::uint64_t sim_seed = 1;
  double sim_noise = 1.0;
  sim->add_option("--out", sim_out, "output directory")->required();
  sim->add_option("--mapping", sim_mapping, "linear|tanh|sine");
  sim->add_option("--obs", sim_obs, "gaussian|poisson");
  sim->add_option("--neurons", sim_neurons, "observation dimension N");
  sim->add_option("--timesteps", sim_T, "time points per trial");
  sim->add_option("--seed", sim_seed, "generator seed");
  sim->add_option("--trials", sim_trials, "number of trials");
  sim->add_option("--noise", sim_noise, "gaussian observation variance");
  sim->add_option("--subsample", sim_subsample,
                  "integrator steps per emitted time point");

  auto* train = app.add_subcommand("train", "run a training sweep");
  std::string tr_config, tr_data, tr_out;
  std::vector<std::string> tr_set;
  train->add_option("--config", tr_config, "key = value config file");
  train->add_option("--data", tr_data, "dataset directory");
  train->add_option("--out", tr_out, "results directory");
  train->add_option("--set", tr_set, "config override key=value")
      ->take_all();

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_ckpt, ev_data, ev_plot;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--plot", ev_plot, "long-format CSV output (series,t,value)");

  auto* cos = app.add_subcommand("cosmooth",
                                 "leave-one-neuron-out predictive R^2");
  std::string cos_ckpt, cos_data;
  int cos_dims = 0, cos_iters = 300;
  cos->add_option("--checkpoint", cos_ckpt, "count-model checkpoint")
      ->required();
  cos->add_option("--data", cos_data, "dataset directory")->required();
  cos->add_option("--dims", cos_dims, "expected latent dimension");
  cos->add_option("--infer-iters", cos_iters,
                  "test-time latent inference steps");

  auto* gc = app.add_subcommand("gradcheck",
                                "finite-difference gradient verification");
  std::uint64_t gc_seed = 7;
  gc->add_option("--seed", gc_seed, "instance seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed())
      return cmd_simulate(sim_out, sim_mapping, sim_obs, sim_neurons, sim_T,
                          sim_seed, sim_trials, sim_noise, sim_subsample);
    if (train->parsed()) return cmd_train(tr_config, tr_data, tr_out, tr_set);
    if (ev->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_plot);
    if (cos->parsed())
      return cmd_cosmooth(cos_ckpt, cos_data, cos_dims, cos_iters);
    if (gc->parsed()) return cmd_gradcheck(gc_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
