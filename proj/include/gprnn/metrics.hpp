// Evaluation metrics: affine-aligned latent-recovery RMSE, R^2, and
// the leave-one-neuron-out co-smoothing predictive R^2.
#pragma once

#include "gprnn/train.hpp"

namespace gprnn {

struct AlignmentMap {
  Matrix A;         // L_truth x L_est
  Vector b;         // L_truth
  bool ridge_fallback = false;
};

// Least-squares affine map truth ~ A est + b over all T columns.
// Rank-deficient designs fall back to a ridge solve (lambda = 1e-8)
// and set the warning flag.
inline std::pair<AlignmentMap, LatentTrajectory> affine_align(
    const LatentTrajectory& est, const LatentTrajectory& truth) {
  int T = static_cast<int>(est.cols());
  if (truth.cols() != T) throw Error("affine_align: T mismatch");
  int Le = static_cast<int>(est.rows());
  int Lt = static_cast<int>(truth.rows());
  Matrix X(T, Le + 1);
  X.leftCols(Le) = est.transpose();
  X.col(Le).setOnes();
  Matrix Y = truth.transpose();  // T x Lt
  AlignmentMap map;
  Eigen::ColPivHouseholderQR<Matrix> qr(X);
  Matrix B;
  if (qr.rank() < Le + 1) {
    map.ridge_fallback = true;
    Matrix G = X.transpose() * X +
               1e-8 * Matrix::Identity(Le + 1, Le + 1);
    B = G.ldlt().solve(X.transpose() * Y);
  } else {
    B = qr.solve(Y);
  }
  map.A = B.topRows(Le).transpose();
  map.b = B.row(Le).transpose();
  LatentTrajectory aligned = (map.A * est).colwise() + map.b;
  return {map, aligned};
}

inline double rmse_aligned(const LatentTrajectory& est,
                           const LatentTrajectory& truth) {
  auto [map, aligned] = affine_align(est, truth);
  return std::sqrt((aligned - truth).squaredNorm() /
                   static_cast<double>(truth.size()));
}

inline double r_squared(const Vector& pred, const Vector& truth) {
  if (pred.size() != truth.size() || pred.size() < 2)
    throw Error("r_squared: need equal lengths >= 2");
  double mean = truth.mean();
  double ss_tot = (truth.array() - mean).square().sum();
  if (ss_tot <= 0) throw Error("r_squared: constant truth");
  double ss_res = (pred - truth).squaredNorm();
  return 1.0 - ss_res / ss_tot;
}

// ---------------------------------------------------------------------------
// Co-smoothing (leave-one-neuron-out predictive R^2), Poisson path.

// Frozen artifacts of a Poisson MAP fit, with per-trial latents and
// tuning values concatenated as the GP conditioning set.
struct CosmoothModel {
  ParamVector params;  // model segments only are read
  ModelConfig model;
  LatentTrajectory z_train;  // L x T_total
  TuningMatrix f_train;      // N x T_total
};

inline CosmoothModel cosmooth_model_from(const PoissonTrainResult& fit,
                                         const ModelConfig& m,
                                         int max_points = 1200) {
  CosmoothModel cm;
  cm.params = fit.params;
  cm.model = m;
  std::vector<LatentTrajectory> zs;
  std::vector<TuningMatrix> fs;
  int total = 0;
  for (int k = 0; k < fit.trials; ++k) {
    zs.push_back(fit.params.get(trial_seg("z", k)));
    fs.push_back(fit.params.get(trial_seg("F", k)));
    total += static_cast<int>(zs.back().cols());
  }
  int N = static_cast<int>(fs.front().rows());
  int L = static_cast<int>(zs.front().rows());
  Matrix z(L, total), f(N, total);
  int at = 0;
  for (std::size_t k = 0; k < zs.size(); ++k) {
    z.middleCols(at, zs[k].cols()) = zs[k];
    f.middleCols(at, zs[k].cols()) = fs[k];
    at += static_cast<int>(zs[k].cols());
  }
  if (total > max_points) {
    // deterministic stride subsample to cap the conditioning set
    int stride = (total + max_points - 1) / max_points;
    int kept = (total + stride - 1) / stride;
    Matrix zc(L, kept), fc(N, kept);
    for (int i = 0, j = 0; i < total; i += stride, ++j) {
      zc.col(j) = z.col(i);
      fc.col(j) = f.col(i);
    }
    z = zc;
    f = fc;
  }
  cm.z_train = z;
  cm.f_train = f;
  return cm;
}

struct CosmoothConfig {
  int infer_iters = 300;
  AdamHyper adam{0.05, 0.9, 0.999, 1e-8};
  double clip_norm = 10.0;
  double smooth_width = 5.0;
};

// Poisson log-likelihood restricted by a 0/1 row mask.
inline Var poisson_loglik_masked_tape(Tape& tape, const Matrix& x, Var f,
                                      const Matrix& mask) {
  Var fc = clamp_max(f, kRateExpCap, &poisson_clamp_hits());
  Var mv = tape.constant(mask);
  Var xv = tape.constant(x.cwiseProduct(mask));
  Var term = sub(dot(xv, fc), sum(cmul(mv, exp_(fc))));
  Matrix lg = x.unaryExpr([](double k) { return std::lgamma(k + 1.0); });
  return add_const(term, -lg.cwiseProduct(mask).sum());
}

namespace detail {

// MAP inference of a test trial's latents with parameters frozen; the
// tuning matrix is tied to the training fit through the GP posterior
// mean F(z) = (K_*(z) K^{-1} F_train^T)^T. Returns (z, predicted F).
inline std::pair<LatentTrajectory, Matrix> infer_test_latents(
    const CosmoothModel& cm, const ObservationMatrix& x, const Matrix& mask,
    const CosmoothConfig& cc) {
  const ModelConfig& m = cm.model;
  GpHyper hyper = gp_hyper_from(cm.params, m.jitter);
  GramResult g = gram_cholesky(rbf_gram_raw(cm.z_train, hyper), hyper);
  Matrix alpha = g.llt.solve(cm.f_train.transpose());  // T_train x N
  int T = x.timesteps();

  ParamVector p = cm.params;
  p.add("ztest", m.latent_dim, T);
  double inv2s2 = 0.5 / (hyper.sigma * hyper.sigma);

  auto build = [&](Tape& tape, const ParamVars& vars) {
    Var z = vars["ztest"];
    Var d = sqdist_cross(z, cm.z_train);
    Var kcross = scale(exp_(scale(d, -inv2s2)), hyper.rho);
    Var fpred = transpose(matmul(kcross, tape.constant(alpha)));
    Var obj = poisson_loglik_masked_tape(tape, x.values, fpred, mask);
    Var prior = m.dynamics == DynamicsKind::Rnn
                    ? latent_log_prior_tape(tape, vars, m.rnn(), z)
                    : ar1_log_prior_tape(tape, vars, z);
    return add(obj, prior);
  };

  AdamState adam = AdamState::init(p, cc.adam);
  for (int it = 0; it < cc.infer_iters; ++it) {
    Tape tape;
    ParamVars vars(tape, p);
    Var obj = build(tape, vars);
    tape.backward(obj);
    GradVector grads = vars.collect_grads(tape);
    for (const Segment& s : grads.segments())
      if (s.name != "ztest")
        grads.values.segment(s.offset, s.size()).setZero();
    grads = clip_gradients(grads, cc.clip_norm);
    std::tie(p, adam) = adam_step(p, grads, adam);
  }

  LatentTrajectory z = p.get("ztest");
  // final predicted tuning values at the inferred latents
  Matrix fpred(cm.f_train.rows(), T);
  for (int t = 0; t < T; ++t) {
    Vector zt = z.col(t);
    Vector ks(cm.z_train.cols());
    for (int s = 0; s < cm.z_train.cols(); ++s)
      ks[s] = rbf_kernel(cm.z_train.col(s), zt, hyper);
    fpred.col(t) = alpha.transpose() * ks;
  }
  return {z, fpred};
}

}  // namespace detail

// Predictive R^2 for one left-out neuron over a set of test trials:
// infer latents from the remaining neurons, predict the left-out
// neuron's rate via the GP posterior mean, and compare to its smoothed
// empirical rate.
inline double cosmooth_r2(const CosmoothModel& cm,
                          const std::vector<ObservationMatrix>& test_trials,
                          int neuron, const CosmoothConfig& cc = {}) {
  int N = static_cast<int>(cm.f_train.rows());
  if (neuron < 0 || neuron >= N)
    throw Error("cosmooth_r2: neuron index out of range");
  std::vector<double> pred_all, truth_all;
  for (const auto& trial : test_trials) {
    Matrix mask = Matrix::Ones(N, trial.timesteps());
    mask.row(neuron).setZero();
    auto [z, fpred] = detail::infer_test_latents(cm, trial, mask, cc);
    Matrix rate_emp = gaussian_smooth_rows(trial.values, cc.smooth_width);
    for (int t = 0; t < trial.timesteps(); ++t) {
      pred_all.push_back(
          std::exp(std::min(kRateExpCap, fpred(neuron, t))));
      truth_all.push_back(rate_emp(neuron, t));
    }
  }
  Vector pred = Eigen::Map<Vector>(pred_all.data(), pred_all.size());
  Vector truth = Eigen::Map<Vector>(truth_all.data(), truth_all.size());
  return r_squared(pred, truth);
}

inline double cosmooth_average_r2(
    const CosmoothModel& cm,
    const std::vector<ObservationMatrix>& test_trials,
    const CosmoothConfig& cc = {}) {
  int N = static_cast<int>(cm.f_train.rows());
  double total = 0.0;
  for (int n = 0; n < N; ++n)
    total += cosmooth_r2(cm, test_trials, n, cc);
  return total / N;
}

}  // namespace gprnn
