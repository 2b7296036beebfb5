// Latent-prior models: the stochastic-RNN prior (LSTM or GRU hidden
// update plus a 2-hidden-layer head producing the per-step Gaussian
// parameters) and the first-order autoregressive baseline.
#pragma once

#include <utility>

#include "gprnn/optim.hpp"
#include "gprnn/params.hpp"
#include "gprnn/tape.hpp"

namespace gprnn {

// L x T latent path z_{1:T}.
using LatentTrajectory = Matrix;

enum class CellKind { LSTM, GRU };

struct RnnConfig {
  int latent_dim = 3;   // L
  int hidden = 30;      // H
  CellKind cell = CellKind::LSTM;
};

struct RnnState {
  Vector hidden;  // nu_t, length H
  Vector cell;    // LSTM only
  static RnnState zero(const RnnConfig& cfg) {
    return {Vector::Zero(cfg.hidden), Vector::Zero(cfg.hidden)};
  }
};

struct Ar1Params {
  Vector a;    // per-dimension autoregression coefficient
  Vector q;    // innovation variance, > 0
  Vector mu0;  // initial-state mean
  Vector q0;   // initial-state variance, > 0
};

// ---------------------------------------------------------------------------
// Parameter layout. Segment names are "<prefix>.Wx" etc so the same code
// serves the generative prior ("rnn"/"head") and encoder LSTMs ("encl",
// "encr").

inline void add_rnn_segments(ParamVector& p, const std::string& prefix,
                             const RnnConfig& cfg, int input_dim) {
  int g = cfg.cell == CellKind::LSTM ? 4 : 3;
  p.add(prefix + ".Wx", g * cfg.hidden, input_dim);
  p.add(prefix + ".Wh", g * cfg.hidden, cfg.hidden);
  p.add(prefix + ".b", g * cfg.hidden, 1);
}

// 2-hidden-layer feed-forward head: hidden -> tanh H -> tanh H ->
// (linear mu, softplus variance), both of width out_dim.
inline void add_head_segments(ParamVector& p, const std::string& prefix,
                              int in_dim, int width, int out_dim) {
  p.add(prefix + ".W1", width, in_dim);
  p.add(prefix + ".b1", width, 1);
  p.add(prefix + ".W2", width, width);
  p.add(prefix + ".b2", width, 1);
  p.add(prefix + ".Wmu", out_dim, width);
  p.add(prefix + ".bmu", out_dim, 1);
  p.add(prefix + ".Wsig", out_dim, width);
  p.add(prefix + ".bsig", out_dim, 1);
}

// Orthogonal matrix from the QR of a seeded standard-normal draw, with
// column signs fixed by the R diagonal so the result is deterministic.
inline Matrix orthogonal_matrix(int n, Rng& rng) {
  Matrix a = rng.normal_matrix(n, n);
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  return q;
}

inline Matrix fan_in_uniform(int rows, int cols, Rng& rng) {
  double s = std::sqrt(1.0 / std::max(1, cols));
  return rng.uniform_matrix(rows, cols, -s, s);
}

// Orthogonal recurrent blocks, symmetric-uniform fan-in elsewhere.
inline void init_rnn_params(ParamVector& p, const std::string& prefix,
                            const RnnConfig& cfg, int input_dim, Rng& rng) {
  int g = cfg.cell == CellKind::LSTM ? 4 : 3;
  Matrix wh(g * cfg.hidden, cfg.hidden);
  for (int k = 0; k < g; ++k)
    wh.middleRows(k * cfg.hidden, cfg.hidden) =
        orthogonal_matrix(cfg.hidden, rng);
  p.set(prefix + ".Wh", wh);
  p.set(prefix + ".Wx", fan_in_uniform(g * cfg.hidden, input_dim, rng));
  p.set(prefix + ".b", Matrix::Zero(g * cfg.hidden, 1));
}

inline void init_head_params(ParamVector& p, const std::string& prefix,
                             int in_dim, int width, int out_dim, Rng& rng) {
  p.set(prefix + ".W1", fan_in_uniform(width, in_dim, rng));
  p.set(prefix + ".W2", fan_in_uniform(width, width, rng));
  p.set(prefix + ".Wmu", fan_in_uniform(out_dim, width, rng));
  p.set(prefix + ".Wsig", fan_in_uniform(out_dim, width, rng));
}

// ---------------------------------------------------------------------------
// Tape forward passes.

struct RnnVarState {
  Var h;
  Var c;  // LSTM only
};

inline RnnVarState rnn_zero_state(Tape& tape, const RnnConfig& cfg) {
  Var z = tape.constant(Matrix::Zero(cfg.hidden, 1));
  return {z, z};
}

// One recurrence step; `x` may have any input width matching Wx.
inline RnnVarState rnn_step_tape(Tape& tape, const ParamVars& vars,
                                 const std::string& prefix,
                                 const RnnConfig& cfg, Var x,
                                 const RnnVarState& prev) {
  int H = cfg.hidden;
  Var Wx = vars[prefix + ".Wx"], Wh = vars[prefix + ".Wh"],
      b = vars[prefix + ".b"];
  if (cfg.cell == CellKind::LSTM) {
    Var pre = add(add(matmul(Wx, x), matmul(Wh, prev.h)), b);
    Var i = sigmoid_(rows(pre, 0, H));
    Var f = sigmoid_(rows(pre, H, H));
    Var g = tanh_(rows(pre, 2 * H, H));
    Var o = sigmoid_(rows(pre, 3 * H, H));
    Var c = add(cmul(f, prev.c), cmul(i, g));
    Var h = cmul(o, tanh_(c));
    return {h, c};
  }
  // GRU: reset, update, candidate rows in that order.
  Var xr = matmul(Wx, x);
  Var r = sigmoid_(add(add(rows(xr, 0, H),
                           matmul(rows(Wh, 0, H), prev.h)),
                       rows(b, 0, H)));
  Var u = sigmoid_(add(add(rows(xr, H, H),
                           matmul(rows(Wh, H, H), prev.h)),
                       rows(b, H, H)));
  Var n = tanh_(add(add(rows(xr, 2 * H, H),
                        matmul(rows(Wh, 2 * H, H), cmul(r, prev.h))),
                    rows(b, 2 * H, H)));
  Var one_minus_u = add_const(neg(u), 1.0);
  Var h = add(cmul(one_minus_u, n), cmul(u, prev.h));
  return {h, h};
}

// Head output: (mu, variance) with variance strictly positive via
// softplus.
inline std::pair<Var, Var> head_forward_tape(Tape& tape,
                                             const ParamVars& vars,
                                             const std::string& prefix,
                                             Var in) {
  Var h1 = tanh_(add(matmul(vars[prefix + ".W1"], in), vars[prefix + ".b1"]));
  Var h2 = tanh_(add(matmul(vars[prefix + ".W2"], h1), vars[prefix + ".b2"]));
  Var mu = add(matmul(vars[prefix + ".Wmu"], h2), vars[prefix + ".bmu"]);
  Var var = softplus_(
      add(matmul(vars[prefix + ".Wsig"], h2), vars[prefix + ".bsig"]));
  return {mu, var};
}

// log N(x; mu, diag var) for column vectors.
inline Var diag_gaussian_logpdf(Var x, Var mu, Var var) {
  Tape& t = *x.tape;
  int n = static_cast<int>(t.value(x).rows());
  Var d = sub(x, mu);
  Var quad = sum(cdiv(cmul(d, d), var));
  Var logdet = sum(log_(var));
  return add_const(scale(add(quad, logdet), -0.5), -0.5 * n * kLog2Pi);
}

// sum_t log N(z_t; mu(nu_t), diag var(nu_t)) with nu rolled forward on
// the given trajectory. The t=1 step reads zero initial state and a
// zero z_0 input.
inline Var latent_log_prior_tape(Tape& tape, const ParamVars& vars,
                                 const RnnConfig& cfg, Var z) {
  int T = static_cast<int>(tape.value(z).cols());
  RnnVarState st = rnn_zero_state(tape, cfg);
  Var z_prev = tape.constant(Matrix::Zero(cfg.latent_dim, 1));
  Var total = tape.constant(0.0);
  for (int t = 0; t < T; ++t) {
    st = rnn_step_tape(tape, vars, "rnn", cfg, z_prev, st);
    auto [mu, var] = head_forward_tape(tape, vars, "head", st.h);
    Var zt = col(z, t);
    total = add(total, diag_gaussian_logpdf(zt, mu, var));
    z_prev = zt;
  }
  return total;
}

// AR1 baseline log prior, per-dimension Markov chain. Parameter
// segments: ar1.a, ar1.logq, ar1.mu0, ar1.logq0 (each L x 1).
inline void add_ar1_segments(ParamVector& p, int latent_dim) {
  p.add("ar1.a", latent_dim, 1);
  p.add("ar1.logq", latent_dim, 1);
  p.add("ar1.mu0", latent_dim, 1);
  p.add("ar1.logq0", latent_dim, 1);
}

inline void init_ar1_params(ParamVector& p, int latent_dim) {
  p.set("ar1.a", Matrix::Constant(latent_dim, 1, 0.9));
  p.set("ar1.logq", Matrix::Constant(latent_dim, 1, std::log(0.1)));
  p.set("ar1.mu0", Matrix::Zero(latent_dim, 1));
  p.set("ar1.logq0", Matrix::Zero(latent_dim, 1));
}

inline Var ar1_log_prior_tape(Tape& tape, const ParamVars& vars, Var z) {
  int T = static_cast<int>(tape.value(z).cols());
  Var q = exp_(vars["ar1.logq"]);
  Var q0 = exp_(vars["ar1.logq0"]);
  Var total = diag_gaussian_logpdf(col(z, 0), vars["ar1.mu0"], q0);
  if (T > 1) {
    Var zp = cols(z, 0, T - 1);
    Var zc = cols(z, 1, T - 1);
    Var a = vars["ar1.a"];
    // mean of column t is a .* z_{t-1}; broadcast a over columns
    Var d = sub(zc, cmul(zp, matmul(a, tape.constant(
                                          Matrix::Ones(1, T - 1)))));
    Var qrep = matmul(q, tape.constant(Matrix::Ones(1, T - 1)));
    Var quad = sum(cdiv(cmul(d, d), qrep));
    Var logdet = scale(sum(log_(q)), static_cast<double>(T - 1));
    int L = static_cast<int>(tape.value(z).rows());
    total = add(total,
                add_const(scale(add(quad, logdet), -0.5),
                          -0.5 * L * (T - 1) * kLog2Pi));
  }
  return total;
}

// ---------------------------------------------------------------------------
// Plain-value wrappers (evaluate the same tape code, forward only).

inline RnnState rnn_step(const ParamVector& params, const RnnConfig& cfg,
                         const Vector& z_prev, const RnnState& prev) {
  Tape tape;
  ParamVars vars(tape, params);
  RnnVarState st{tape.constant(Matrix(prev.hidden)),
                 tape.constant(Matrix(prev.cell))};
  Var x = tape.constant(Matrix(z_prev));
  RnnVarState out = rnn_step_tape(tape, vars, "rnn", cfg, x, st);
  return {tape.value(out.h).col(0), tape.value(out.c).col(0)};
}

inline std::pair<Vector, Vector> prior_params(const ParamVector& params,
                                              const RnnConfig& cfg,
                                              const RnnState& state) {
  Tape tape;
  ParamVars vars(tape, params);
  Var h = tape.constant(Matrix(state.hidden));
  auto [mu, var] = head_forward_tape(tape, vars, "head", h);
  return {tape.value(mu).col(0), tape.value(var).col(0)};
}

inline double latent_log_prior(const ParamVector& params,
                               const RnnConfig& cfg,
                               const LatentTrajectory& z) {
  Tape tape;
  ParamVars vars(tape, params);
  Var zv = tape.constant(z);
  return tape.scalar_value(latent_log_prior_tape(tape, vars, cfg, zv));
}

// Ancestral sampling from the prior; seeded and reproducible.
inline LatentTrajectory sample_prior(const ParamVector& params,
                                     const RnnConfig& cfg, int T,
                                     std::uint64_t seed) {
  if (T < 1) throw Error("sample_prior: T must be >= 1");
  Rng rng(seed);
  RnnState st = RnnState::zero(cfg);
  Vector z_prev = Vector::Zero(cfg.latent_dim);
  LatentTrajectory z(cfg.latent_dim, T);
  for (int t = 0; t < T; ++t) {
    st = rnn_step(params, cfg, z_prev, st);
    auto [mu, var] = prior_params(params, cfg, st);
    for (int d = 0; d < cfg.latent_dim; ++d)
      z(d, t) = mu[d] + std::sqrt(var[d]) * rng.normal();
    z_prev = z.col(t);
  }
  return z;
}

inline double ar1_log_prior(const Ar1Params& p, const LatentTrajectory& z) {
  int L = static_cast<int>(z.rows()), T = static_cast<int>(z.cols());
  if (p.a.size() != L) throw Error("ar1_log_prior: dimension mismatch");
  double total = 0.0;
  for (int d = 0; d < L; ++d) {
    double r = z(d, 0) - p.mu0[d];
    total += -0.5 * (kLog2Pi + std::log(p.q0[d]) + r * r / p.q0[d]);
    for (int t = 1; t < T; ++t) {
      double e = z(d, t) - p.a[d] * z(d, t - 1);
      total += -0.5 * (kLog2Pi + std::log(p.q[d]) + e * e / p.q[d]);
    }
  }
  return total;
}

// L2 penalty on the recurrent gate weights (stand-in for the dropout/L2
// regularization of the reference setup).
inline Var rnn_l2_penalty_tape(Tape& tape, const ParamVars& vars,
                               const std::string& prefix, double coeff) {
  Var wx = vars[prefix + ".Wx"], wh = vars[prefix + ".Wh"];
  return scale(add(sum(cmul(wx, wx)), sum(cmul(wh, wh))), coeff);
}

}  // namespace gprnn
