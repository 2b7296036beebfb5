// Training loops: the variational loop for Gaussian observations
// (encode -> sample -> ELBO -> clip -> Adam) and MAP coordinate ascent
// for the Poisson model, plus smoothed-count initialization and
// prior-mean forecasting.
#pragma once

#include <chrono>
#include <functional>

#include "gprnn/elbo.hpp"
#include "gprnn/lorenz.hpp"

namespace gprnn {

struct TrainConfig {
  long max_iters = 20000;
  double tol = 1e-6;       // relative objective change
  int patience = 50;       // iterations the tolerance must hold
  AdamHyper adam;
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
  int mc_samples = 1;
  bool sampled_entropy = false;
  // Poisson coordinate-ascent schedule
  int block_steps = 25;
  int hyper_every = 4;     // hyper block every k-th cycle
  long max_blocks = 2000;
};

struct TrainIterRecord {
  long iter = 0;
  double objective = 0.0;
  double grad_norm = 0.0;
  double elapsed_s = 0.0;
};

struct TrainReport {
  std::vector<TrainIterRecord> iters;
  double best_objective = -std::numeric_limits<double>::infinity();
  long best_iter = -1;
  bool converged = false;
};

struct TrainResult {
  ParamVector params;      // best-objective checkpoint
  ParamVector last_params; // final iterate, for resuming
  AdamState adam;
  long next_iter = 0;
  TrainReport report;
};

using IterCallback =
    std::function<void(const TrainIterRecord&)>;  // may be empty

namespace detail {

inline double now_s() {
  using clock = std::chrono::steady_clock;
  static const auto t0 = clock::now();
  return std::chrono::duration<double>(clock::now() - t0).count();
}

// Evaluate value+grad with jitter escalation on Cholesky failure.
template <class Builder>
std::pair<double, GradVector> value_and_grad_escalating(
    const Builder& build, const ParamVector& p) {
  double mult = 1.0;
  for (int attempt = 0; attempt <= 3; ++attempt, mult *= 10.0) {
    try {
      Tape tape;
      ParamVars vars(tape, p);
      Var obj = build(tape, vars, mult);
      tape.backward(obj);
      return {tape.scalar_value(obj), vars.collect_grads(tape)};
    } catch (const Error& e) {
      if (std::string(e.what()).find("positive definite") ==
              std::string::npos ||
          attempt == 3)
        throw;
    }
  }
  throw Error("value_and_grad_escalating: unreachable");
}

}  // namespace detail

// Algorithm-1 style training for the Gaussian model. Deterministic for
// a fixed config and seed; per-iteration noise comes from a stream
// derived from (seed, iter) so a resumed run replays the same draws.
inline TrainResult train_gaussian(const ObservationMatrix& x_raw,
                                  const ModelConfig& m,
                                  const EncoderConfig& enc,
                                  const TrainConfig& tc,
                                  const ParamVector* resume_params = nullptr,
                                  const AdamState* resume_adam = nullptr,
                                  long start_iter = 0,
                                  IterCallback cb = {}) {
  if (x_raw.kind != ObsKind::Real)
    throw Error("train_gaussian: Gaussian-kind observations required");
  // zero-mean GP: center per neuron
  ObservationMatrix x = x_raw;
  if (m.mapping == MappingKind::Gp)
    x.values = x.values.colwise() - Vector(x.values.rowwise().mean());

  ParamVector params = resume_params
                           ? *resume_params
                           : make_gaussian_params(m, enc, tc.seed);
  AdamState adam = resume_adam ? *resume_adam
                               : AdamState::init(params, tc.adam);
  int T = static_cast<int>(x.values.cols());

  TrainResult res;
  res.params = params;
  res.next_iter = start_iter;
  TrainReport& rep = res.report;
  double prev_obj = std::numeric_limits<double>::quiet_NaN();
  int stable = 0;
  double t_start = detail::now_s();

  for (long iter = start_iter; iter < tc.max_iters; ++iter) {
    Rng rng(Rng::mix(tc.seed, static_cast<std::uint64_t>(iter)));
    double obj_acc = 0.0;
    GradVector g = params.zeros_like();
    for (int s = 0; s < tc.mc_samples; ++s) {
      Matrix eps = rng.normal_matrix(enc.latent_dim, T);
      auto [v, gs] = detail::value_and_grad_escalating(
          [&](Tape& tape, const ParamVars& vars, double mult) {
            return elbo_tape(tape, vars, m, enc, x.values, eps,
                             tc.sampled_entropy, mult);
          },
          params);
      obj_acc += v;
      g.values += gs.values;
    }
    double obj = obj_acc / tc.mc_samples;
    g.values /= static_cast<double>(tc.mc_samples);
    if (!std::isfinite(obj))
      throw Error("train_gaussian: non-finite ELBO at iteration " +
                  std::to_string(iter));
    g = clip_gradients(g, tc.clip_norm);

    TrainIterRecord rec{iter, obj, g.values.norm(),
                        detail::now_s() - t_start};
    rep.iters.push_back(rec);
    if (cb) cb(rec);
    if (obj > rep.best_objective) {
      rep.best_objective = obj;
      rep.best_iter = iter;
      res.params = params;
    }
    std::tie(params, adam) = adam_step(params, g, adam);

    if (std::isfinite(prev_obj)) {
      double rel = std::abs(obj - prev_obj) / std::max(1.0, std::abs(obj));
      stable = rel < tc.tol ? stable + 1 : 0;
      if (stable >= tc.patience) {
        rep.converged = true;
        res.next_iter = iter + 1;
        break;
      }
    }
    prev_obj = obj;
    res.next_iter = iter + 1;
  }
  res.last_params = params;
  res.adam = adam;
  return res;
}

// ---------------------------------------------------------------------------
// Smoothed-count initialization and the shared smoothing kernel.

// Truncated, renormalized Gaussian kernel smoothing along time, per row.
inline Matrix gaussian_smooth_rows(const Matrix& counts, double width) {
  double sd = std::max(0.5, width / 2.0);
  int radius = static_cast<int>(std::ceil(3.0 * sd));
  int T = static_cast<int>(counts.cols());
  Matrix out(counts.rows(), T);
  std::vector<double> kern(2 * radius + 1);
  for (int k = -radius; k <= radius; ++k)
    kern[k + radius] = std::exp(-0.5 * k * k / (sd * sd));
  for (int t = 0; t < T; ++t) {
    double wsum = 0.0;
    Vector acc = Vector::Zero(counts.rows());
    for (int k = -radius; k <= radius; ++k) {
      int s = t + k;
      if (s < 0 || s >= T) continue;
      acc += kern[k + radius] * counts.col(s);
      wsum += kern[k + radius];
    }
    out.col(t) = acc / wsum;
  }
  return out;
}

// GPFA-flavored initialization of log-rates from smoothed counts.
inline TuningMatrix init_f(const ObservationMatrix& x, double width = 5.0,
                           double eps_rate = 0.1) {
  if (x.kind != ObsKind::Counts)
    throw Error("init_f: counts-kind observations required");
  Matrix sm = gaussian_smooth_rows(x.values, width);
  return (sm.array() + eps_rate).log();
}

// Shared-loading latent initialization: top-L principal directions of
// the row-centered concatenated log-rates, rows standardized.
inline std::vector<LatentTrajectory> init_latents_pca(
    const std::vector<TuningMatrix>& f_init, int latent_dim) {
  int N = static_cast<int>(f_init.front().rows());
  int total_T = 0;
  for (const auto& f : f_init) total_T += static_cast<int>(f.cols());
  Matrix cat(N, total_T);
  int at = 0;
  for (const auto& f : f_init) {
    cat.middleCols(at, f.cols()) = f;
    at += static_cast<int>(f.cols());
  }
  Vector mean = cat.rowwise().mean();
  cat.colwise() -= mean;
  Eigen::BDCSVD<Matrix> svd(cat, Eigen::ComputeThinU);
  // fewer principal directions than latents: fill the remainder with a
  // deterministic oscillation so no two time points coincide
  int avail = std::min<int>(latent_dim, static_cast<int>(svd.matrixU().cols()));
  Matrix proj = Matrix::Zero(latent_dim, total_T);
  proj.topRows(avail) = svd.matrixU().leftCols(avail).transpose() * cat;
  for (int d = avail; d < latent_dim; ++d)
    for (int t = 0; t < total_T; ++t)
      proj(d, t) = 0.01 * std::sin(0.7 * (t + 1) * (d + 1));
  proj = standardize_rows(proj);
  std::vector<LatentTrajectory> out;
  at = 0;
  for (const auto& f : f_init) {
    out.push_back(proj.middleCols(at, f.cols()));
    at += static_cast<int>(f.cols());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Poisson MAP coordinate ascent over (F, z+dynamics, hypers) blocks.

struct PoissonTrainResult {
  ParamVector params;  // model segments plus per-trial F.k / z.k
  TrainReport report;
  int trials = 0;
};

inline std::string trial_seg(const char* base, int k) {
  return std::string(base) + "." + std::to_string(k);
}

inline Var poisson_joint_tape(Tape& tape, const ParamVars& vars,
                              const ModelConfig& m,
                              const std::vector<ObservationMatrix>& trials,
                              double jitter_mult) {
  double jitter_abs = m.jitter * jitter_mult *
                      std::exp(tape.value(vars["gp.logrho"])(0, 0));
  Var total = tape.constant(0.0);
  for (std::size_t k = 0; k < trials.size(); ++k) {
    Var f = vars[trial_seg("F", static_cast<int>(k))];
    Var z = vars[trial_seg("z", static_cast<int>(k))];
    total = add(total, poisson_loglik_tape(tape, trials[k].values, f));
    total = add(total,
                gp_prior_f_sum_tape(tape, vars, z, transpose(f), jitter_abs));
    Var prior = m.dynamics == DynamicsKind::Rnn
                    ? latent_log_prior_tape(tape, vars, m.rnn(), z)
                    : ar1_log_prior_tape(tape, vars, z);
    total = add(total, prior);
  }
  if (m.dynamics == DynamicsKind::Rnn && m.l2_coeff > 0)
    total = sub(total, rnn_l2_penalty_tape(tape, vars, "rnn", m.l2_coeff));
  return total;
}

inline ParamVector make_poisson_params(
    const ModelConfig& m, const std::vector<ObservationMatrix>& trials,
    std::uint64_t seed, double smooth_width = 5.0) {
  ParamVector p;
  add_model_segments(p, m);
  std::vector<TuningMatrix> f0;
  for (std::size_t k = 0; k < trials.size(); ++k) {
    trials[k].validate();
    f0.push_back(init_f(trials[k], smooth_width));
    p.add(trial_seg("F", static_cast<int>(k)), trials[k].neurons(),
          trials[k].timesteps());
    p.add(trial_seg("z", static_cast<int>(k)), m.latent_dim,
          trials[k].timesteps());
  }
  Rng rng(seed);
  init_model_params(p, m, rng);
  auto z0 = init_latents_pca(f0, m.latent_dim);
  for (std::size_t k = 0; k < trials.size(); ++k) {
    p.set(trial_seg("F", static_cast<int>(k)), f0[k]);
    p.set(trial_seg("z", static_cast<int>(k)), z0[k]);
  }
  return p;
}

enum class PoissonBlock { TuningF, LatentDynamics, Hypers };

inline bool segment_in_block(const std::string& name, PoissonBlock b) {
  auto starts = [&](const char* pre) { return name.rfind(pre, 0) == 0; };
  switch (b) {
    case PoissonBlock::TuningF:
      return starts("F.");
    case PoissonBlock::LatentDynamics:
      return starts("z.") || starts("rnn.") || starts("head.") ||
             starts("ar1.");
    case PoissonBlock::Hypers:
      return starts("gp.");
  }
  return false;
}

inline void mask_to_block(GradVector& g, PoissonBlock b) {
  for (const Segment& s : g.segments())
    if (!segment_in_block(s.name, b))
      g.values.segment(s.offset, s.size()).setZero();
}

// Coordinate ascent: a fixed number of Adam steps per block, hypers on
// a slower schedule. A block whose end-of-block joint drops by more
// than the overshoot tolerance is rejected (parameters restored, that
// block's step size halved), so accepted blocks never decrease the
// joint beyond tolerance.
inline PoissonTrainResult train_poisson_map(
    const std::vector<ObservationMatrix>& trials, const ModelConfig& m,
    const TrainConfig& tc, IterCallback cb = {}) {
  for (const auto& t : trials)
    if (t.kind != ObsKind::Counts)
      throw Error("train_poisson_map: counts-kind observations required");
  if (m.mapping != MappingKind::Gp)
    throw Error("train_poisson_map: GP mapping required");

  ParamVector params = make_poisson_params(m, trials, tc.seed);
  auto builder = [&](Tape& tape, const ParamVars& vars, double mult) {
    return poisson_joint_tape(tape, vars, m, trials, mult);
  };

  std::array<AdamState, 3> adam = {AdamState::init(params, tc.adam),
                                   AdamState::init(params, tc.adam),
                                   AdamState::init(params, tc.adam)};
  PoissonTrainResult res;
  res.trials = static_cast<int>(trials.size());
  TrainReport& rep = res.report;
  double t_start = detail::now_s();
  double joint = eval_objective(
      [&](Tape& t, const ParamVars& v) { return builder(t, v, 1.0); },
      params);
  rep.best_objective = joint;
  rep.best_iter = -1;
  res.params = params;

  double prev = joint;
  int stable = 0;
  for (long cycle = 0; cycle < tc.max_blocks; ++cycle) {
    std::vector<PoissonBlock> blocks = {PoissonBlock::TuningF,
                                        PoissonBlock::LatentDynamics};
    if (tc.hyper_every > 0 && cycle % tc.hyper_every == tc.hyper_every - 1)
      blocks.push_back(PoissonBlock::Hypers);
    double last_grad_norm = 0.0;
    for (PoissonBlock b : blocks) {
      ParamVector snapshot = params;
      AdamState adam_snapshot = adam[static_cast<int>(b)];
      double block_start = joint;
      for (int s = 0; s < tc.block_steps; ++s) {
        auto [v, g] = detail::value_and_grad_escalating(builder, params);
        if (!std::isfinite(v))
          throw Error("train_poisson_map: non-finite joint log-probability");
        mask_to_block(g, b);
        g = clip_gradients(g, tc.clip_norm);
        last_grad_norm = g.values.norm();
        std::tie(params, adam[static_cast<int>(b)]) =
            adam_step(params, g, adam[static_cast<int>(b)]);
      }
      joint = eval_objective(
          [&](Tape& t, const ParamVars& v) { return builder(t, v, 1.0); },
          params);
      double tol_abs = 1e-6 * std::max(1.0, std::abs(block_start));
      if (joint < block_start - tol_abs) {
        // Adam overshot: reject the block and soften its step size.
        params = snapshot;
        adam[static_cast<int>(b)] = adam_snapshot;
        adam[static_cast<int>(b)].hyper.lr =
            std::max(1e-6, adam[static_cast<int>(b)].hyper.lr * 0.5);
        joint = block_start;
      }
    }
    TrainIterRecord rec{cycle, joint, last_grad_norm,
                        detail::now_s() - t_start};
    rep.iters.push_back(rec);
    if (cb) cb(rec);
    if (joint > rep.best_objective) {
      rep.best_objective = joint;
      rep.best_iter = cycle;
      res.params = params;
    }
    double rel = std::abs(joint - prev) / std::max(1.0, std::abs(joint));
    stable = rel < tc.tol ? stable + 1 : 0;
    if (stable >= tc.patience) {
      rep.converged = true;
      break;
    }
    prev = joint;
  }
  if (rep.best_iter < 0) res.params = params;
  return res;
}

// ---------------------------------------------------------------------------
// Prior-mean latent forecast for the held-out evaluation window.

inline LatentTrajectory forecast_latents(const ParamVector& params,
                                         const ModelConfig& m,
                                         const LatentTrajectory& z_train,
                                         int horizon) {
  int L = static_cast<int>(z_train.rows());
  LatentTrajectory out(L, horizon);
  if (m.dynamics == DynamicsKind::Ar1) {
    Vector a = params.get("ar1.a").col(0);
    Vector z = z_train.col(z_train.cols() - 1);
    for (int t = 0; t < horizon; ++t) {
      z = a.cwiseProduct(z);
      out.col(t) = z;
    }
    return out;
  }
  RnnConfig cfg = m.rnn();
  RnnState st = RnnState::zero(cfg);
  Vector z_prev = Vector::Zero(L);
  for (int t = 0; t < z_train.cols(); ++t) {
    st = rnn_step(params, cfg, z_prev, st);
    z_prev = z_train.col(t);
  }
  for (int t = 0; t < horizon; ++t) {
    st = rnn_step(params, cfg, z_prev, st);
    auto [mu, var] = prior_params(params, cfg, st);
    out.col(t) = mu;
    z_prev = mu;
  }
  return out;
}

}  // namespace gprnn
