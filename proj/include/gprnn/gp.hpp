// Gaussian-process tuning-curve machinery: RBF kernel, Gram matrices,
// GP log-densities, the Gaussian-case marginal, the GP predictive
// posterior, and the feed-forward mapping baseline.
#pragma once

#include "gprnn/rnn.hpp"

namespace gprnn {

// N x T matrix F with f_i^T on the i-th row.
using TuningMatrix = Matrix;

struct GpHyper {
  double rho = 1.0;     // marginal variance, > 0
  double sigma = 1.0;   // length scale, > 0
  double jitter = 1e-6; // relative to rho; see gram_matrix
};

inline double rbf_kernel(const Vector& z, const Vector& z2,
                         const GpHyper& h) {
  if (z.size() != z2.size()) throw Error("rbf_kernel: length mismatch");
  return h.rho * std::exp(-(z - z2).squaredNorm() / (2.0 * h.sigma * h.sigma));
}

inline Matrix rbf_gram_raw(const LatentTrajectory& z, const GpHyper& h) {
  int T = static_cast<int>(z.cols());
  Vector sq = z.colwise().squaredNorm();
  Matrix d = sq.replicate(1, T) + sq.transpose().replicate(T, 1) -
             2.0 * z.transpose() * z;
  Matrix k = (h.rho * (-d.cwiseMax(0.0) / (2.0 * h.sigma * h.sigma))
                          .array().exp()).matrix();
  // force exact symmetry against rounding in the distance expansion
  return 0.5 * (k + k.transpose());
}

struct GramResult {
  Matrix K;                 // with the diagonal jitter that passed
  Eigen::LLT<Matrix> llt;
  double jitter_used = 0.0; // absolute, on the diagonal
  int escalations = 0;
};

// K + jitter*I with jitter = h.jitter * rho, escalated x10 up to 3
// times until the Cholesky succeeds.
inline GramResult gram_cholesky(Matrix base, const GpHyper& h,
                                double extra_diag = 0.0) {
  int T = static_cast<int>(base.rows());
  double jit = h.jitter * h.rho;
  for (int attempt = 0; attempt <= 3; ++attempt) {
    Matrix K = base + (jit + extra_diag) * Matrix::Identity(T, T);
    Eigen::LLT<Matrix> llt(K);
    if (llt.info() == Eigen::Success)
      return {std::move(K), std::move(llt), jit, attempt};
    jit *= 10.0;
  }
  throw Error("gram_cholesky: covariance not positive definite after "
              "jitter escalation (T=" + std::to_string(T) + ")");
}

inline Matrix gram_matrix(const LatentTrajectory& z, const GpHyper& h) {
  if (z.cols() < 1) throw Error("gram_matrix: T must be >= 1");
  return gram_cholesky(rbf_gram_raw(z, h), h).K;
}

// log N(f_i; 0, K_z), Cholesky path (no explicit inverse).
inline double gp_log_prior_f(const Vector& f, const LatentTrajectory& z,
                             const GpHyper& h) {
  if (f.size() != z.cols()) throw Error("gp_log_prior_f: length mismatch");
  GramResult g = gram_cholesky(rbf_gram_raw(z, h), h);
  int T = static_cast<int>(f.size());
  double logdet = 0.0;
  for (int i = 0; i < T; ++i)
    logdet += 2.0 * std::log(g.llt.matrixL()(i, i));
  double quad = f.dot(g.llt.solve(f));
  return -0.5 * (quad + logdet + T * kLog2Pi);
}

// log N(x_i; 0, K_z + l*I); callers sum over neurons.
inline double gp_log_marginal_gaussian(const Vector& x,
                                       const LatentTrajectory& z,
                                       const GpHyper& h, double l) {
  if (l <= 0) throw Error("gp_log_marginal_gaussian: l must be > 0");
  if (x.size() != z.cols())
    throw Error("gp_log_marginal_gaussian: length mismatch");
  GramResult g = gram_cholesky(rbf_gram_raw(z, h), h, l);
  int T = static_cast<int>(x.size());
  double logdet = 0.0;
  for (int i = 0; i < T; ++i)
    logdet += 2.0 * std::log(g.llt.matrixL()(i, i));
  double quad = x.dot(g.llt.solve(x));
  return -0.5 * (quad + logdet + T * kLog2Pi);
}

// Conditional-Gaussian predictive at a single query point; variance is
// clamped at zero from below.
inline std::pair<double, double> gp_posterior_predict(
    const Vector& f_train, const LatentTrajectory& z_train,
    const Vector& z_star, const GpHyper& h) {
  int T = static_cast<int>(z_train.cols());
  if (f_train.size() != T)
    throw Error("gp_posterior_predict: training size mismatch");
  GramResult g = gram_cholesky(rbf_gram_raw(z_train, h), h);
  Vector ks(T);
  for (int t = 0; t < T; ++t)
    ks[t] = rbf_kernel(z_train.col(t), z_star, h);
  Vector alpha = g.llt.solve(f_train);
  double mean = ks.dot(alpha);
  double var = h.rho - ks.dot(g.llt.solve(ks));
  return {mean, std::max(0.0, var)};
}

// Shared-Cholesky predictor for many queries / many neurons over the
// same training inputs.
class GpPredictor {
 public:
  static GpPredictor build(const LatentTrajectory& z_train,
                           const GpHyper& h) {
    GpPredictor p;
    p.z_ = z_train;
    p.hyper_ = h;
    p.gram_ = gram_cholesky(rbf_gram_raw(z_train, h), h);
    return p;
  }

  // K^{-1} f for one neuron's training values.
  Vector weights(const Vector& f_train) const {
    return gram_.llt.solve(f_train);
  }

  Vector cross_kernel(const Vector& z_star) const {
    int T = static_cast<int>(z_.cols());
    Vector ks(T);
    for (int t = 0; t < T; ++t)
      ks[t] = rbf_kernel(z_.col(t), z_star, hyper_);
    return ks;
  }

  std::pair<double, double> predict(const Vector& weights_,
                                    const Vector& z_star) const {
    Vector ks = cross_kernel(z_star);
    double mean = ks.dot(weights_);
    double var = hyper_.rho - ks.dot(gram_.llt.solve(ks));
    return {mean, std::max(0.0, var)};
  }

  const LatentTrajectory& train_inputs() const { return z_; }
  const GpHyper& hyper() const { return hyper_; }

 private:
  GpPredictor() = default;

  LatentTrajectory z_;
  GpHyper hyper_;
  GramResult gram_;
};

// ---------------------------------------------------------------------------
// Tape versions. Hyperparameters live in log space: segments gp.logrho,
// gp.logsigma (and obs.logl for the Gaussian noise).

inline void add_gp_segments(ParamVector& p) {
  p.add("gp.logrho", 1, 1);
  p.add("gp.logsigma", 1, 1);
}

inline GpHyper gp_hyper_from(const ParamVector& p, double jitter = 1e-6) {
  GpHyper h;
  h.rho = std::exp(p.get_scalar("gp.logrho"));
  h.sigma = std::exp(p.get_scalar("gp.logsigma"));
  h.jitter = jitter;
  return h;
}

// K(z) + diag_extra*I, all on tape except the jitter terms.
inline Var kernel_matrix_tape(Tape& tape, Var z, Var log_rho, Var log_sigma,
                              double diag_extra) {
  int T = static_cast<int>(tape.value(z).cols());
  Var d = sqdist(z);
  Var inv_two_sig2 = scale(exp_(scale(log_sigma, -2.0)), 0.5);
  Var expo = exp_(neg(smul(inv_two_sig2, d)));
  Var k = smul(exp_(log_rho), expo);
  return add(k, tape.constant(diag_extra * Matrix::Identity(T, T)));
}

// sum_i log N(col_i(X); 0, K(z) + (exp(logl) + jitter) I) on tape.
// X is T x N (transposed observation block).
inline Var gp_marginal_sum_tape(Tape& tape, const ParamVars& vars, Var z,
                                Var x_t, double jitter_abs) {
  Var k = kernel_matrix_tape(tape, z, vars["gp.logrho"], vars["gp.logsigma"],
                             jitter_abs);
  int T = static_cast<int>(tape.value(z).cols());
  Var c = add(k, smul(exp_(vars["obs.logl"]),
                      tape.constant(Matrix::Identity(T, T))));
  return mvn_logpdf_sum(c, x_t);
}

// sum_i log N(f_i; 0, K(z) + jitter I) on tape; f passed as T x N.
inline Var gp_prior_f_sum_tape(Tape& tape, const ParamVars& vars, Var z,
                               Var f_t, double jitter_abs) {
  Var k = kernel_matrix_tape(tape, z, vars["gp.logrho"], vars["gp.logsigma"],
                             jitter_abs);
  return mvn_logpdf_sum(k, f_t);
}

// ---------------------------------------------------------------------------
// Feed-forward mapping baseline (R^L -> R^N), same 2-hidden-layer tanh
// shape as the prior head but with a single linear output.

inline void add_nn_map_segments(ParamVector& p, int latent_dim, int width,
                                int n_neurons) {
  p.add("nnmap.W1", width, latent_dim);
  p.add("nnmap.b1", width, 1);
  p.add("nnmap.W2", width, width);
  p.add("nnmap.b2", width, 1);
  p.add("nnmap.Wout", n_neurons, width);
  p.add("nnmap.bout", n_neurons, 1);
}

inline void init_nn_map_params(ParamVector& p, int latent_dim, int width,
                               int n_neurons, Rng& rng) {
  p.set("nnmap.W1", fan_in_uniform(width, latent_dim, rng));
  p.set("nnmap.W2", fan_in_uniform(width, width, rng));
  p.set("nnmap.Wout", fan_in_uniform(n_neurons, width, rng));
}

inline Var nn_map_forward_tape(Tape& tape, const ParamVars& vars, Var z) {
  Var h1 = tanh_(add_colvec(matmul(vars["nnmap.W1"], z), vars["nnmap.b1"]));
  Var h2 = tanh_(add_colvec(matmul(vars["nnmap.W2"], h1), vars["nnmap.b2"]));
  return add_colvec(matmul(vars["nnmap.Wout"], h2), vars["nnmap.bout"]);
}

inline TuningMatrix nn_map_forward(const ParamVector& params,
                                   const LatentTrajectory& z) {
  Tape tape;
  ParamVars vars(tape, params);
  return tape.value(nn_map_forward_tape(tape, vars, tape.constant(z)));
}

}  // namespace gprnn
