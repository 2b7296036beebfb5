// Variational families and encoder networks: mean field, per-time-point
// feed-forward (VAE), causal/anticausal LSTM encoders and their
// precision-weighted bidirectional combination.
#pragma once

#include "gprnn/observation.hpp"

namespace gprnn {

enum class Family { MF, VAE, LLstm, RLstm, BiLstm };

inline const char* family_name(Family f) {
  switch (f) {
    case Family::MF: return "mf";
    case Family::VAE: return "vae";
    case Family::LLstm: return "l-lstm";
    case Family::RLstm: return "r-lstm";
    case Family::BiLstm: return "bi-lstm";
  }
  return "?";
}

inline Family family_from_name(const std::string& s) {
  if (s == "mf") return Family::MF;
  if (s == "vae") return Family::VAE;
  if (s == "l-lstm") return Family::LLstm;
  if (s == "r-lstm") return Family::RLstm;
  if (s == "bi-lstm") return Family::BiLstm;
  throw Error("unknown variational family '" + s + "'");
}

struct EncoderConfig {
  Family family = Family::BiLstm;
  int latent_dim = 3;  // L
  int obs_dim = 50;    // N
  int timesteps = 200; // T (MF stores locals of this length)
  int hidden = 30;     // encoder LSTM width
  CellKind cell = CellKind::LSTM;
};

struct VariationalPosterior {
  Matrix mu;   // L x T
  Matrix var;  // L x T, > 0 element-wise
};

inline void add_encoder_segments(ParamVector& p, const EncoderConfig& cfg) {
  switch (cfg.family) {
    case Family::MF:
      p.add("q.mu", cfg.latent_dim, cfg.timesteps);
      p.add("q.rawvar", cfg.latent_dim, cfg.timesteps);
      break;
    case Family::VAE:
      add_head_segments(p, "vae", cfg.obs_dim, cfg.hidden, cfg.latent_dim);
      break;
    case Family::LLstm:
      add_rnn_segments(p, "encl", {cfg.latent_dim, cfg.hidden, cfg.cell},
                       cfg.obs_dim);
      add_head_segments(p, "qheadl", cfg.hidden, cfg.hidden, cfg.latent_dim);
      break;
    case Family::RLstm:
      add_rnn_segments(p, "encr", {cfg.latent_dim, cfg.hidden, cfg.cell},
                       cfg.obs_dim);
      add_head_segments(p, "qheadr", cfg.hidden, cfg.hidden, cfg.latent_dim);
      break;
    case Family::BiLstm:
      add_rnn_segments(p, "encl", {cfg.latent_dim, cfg.hidden, cfg.cell},
                       cfg.obs_dim);
      add_head_segments(p, "qheadl", cfg.hidden, cfg.hidden, cfg.latent_dim);
      add_rnn_segments(p, "encr", {cfg.latent_dim, cfg.hidden, cfg.cell},
                       cfg.obs_dim);
      add_head_segments(p, "qheadr", cfg.hidden, cfg.hidden, cfg.latent_dim);
      break;
  }
}

inline void init_encoder_params(ParamVector& p, const EncoderConfig& cfg,
                                Rng& rng) {
  switch (cfg.family) {
    case Family::MF:
      p.set("q.mu", 0.1 * rng.normal_matrix(cfg.latent_dim, cfg.timesteps));
      p.set("q.rawvar",
            Matrix::Constant(cfg.latent_dim, cfg.timesteps, -1.0));
      break;
    case Family::VAE:
      init_head_params(p, "vae", cfg.obs_dim, cfg.hidden, cfg.latent_dim,
                       rng);
      break;
    case Family::LLstm:
      init_rnn_params(p, "encl", {cfg.latent_dim, cfg.hidden, cfg.cell},
                      cfg.obs_dim, rng);
      init_head_params(p, "qheadl", cfg.hidden, cfg.hidden, cfg.latent_dim,
                       rng);
      break;
    case Family::RLstm:
      init_rnn_params(p, "encr", {cfg.latent_dim, cfg.hidden, cfg.cell},
                      cfg.obs_dim, rng);
      init_head_params(p, "qheadr", cfg.hidden, cfg.hidden, cfg.latent_dim,
                       rng);
      break;
    case Family::BiLstm:
      init_rnn_params(p, "encl", {cfg.latent_dim, cfg.hidden, cfg.cell},
                      cfg.obs_dim, rng);
      init_head_params(p, "qheadl", cfg.hidden, cfg.hidden, cfg.latent_dim,
                       rng);
      init_rnn_params(p, "encr", {cfg.latent_dim, cfg.hidden, cfg.cell},
                      cfg.obs_dim, rng);
      init_head_params(p, "qheadr", cfg.hidden, cfg.hidden, cfg.latent_dim,
                       rng);
      break;
  }
}

// Precision-weighted merge of two diagonal Gaussians, element-wise.
inline std::pair<Matrix, Matrix> bilstm_combine(const Matrix& mu_l,
                                                const Matrix& var_l,
                                                const Matrix& mu_r,
                                                const Matrix& var_r) {
  Matrix denom = var_l + var_r;
  Matrix mu = (mu_r.cwiseProduct(var_l) + mu_l.cwiseProduct(var_r))
                  .cwiseQuotient(denom);
  Matrix var = var_l.cwiseProduct(var_r).cwiseQuotient(denom);
  return {mu, var};
}

inline std::pair<Var, Var> bilstm_combine_tape(Var mu_l, Var var_l,
                                               Var mu_r, Var var_r) {
  Var denom = add(var_l, var_r);
  Var mu = cdiv(add(cmul(mu_r, var_l), cmul(mu_l, var_r)), denom);
  Var var = cdiv(cmul(var_l, var_r), denom);
  return {mu, var};
}

namespace detail {

// Runs one directional LSTM encoder over the columns of x and returns
// the per-time (mu, var) stacks. `reverse` flips the scan direction.
inline std::pair<Var, Var> lstm_encode_tape(Tape& tape, const ParamVars& vars,
                                            const EncoderConfig& cfg,
                                            const Matrix& x,
                                            const std::string& rnn_prefix,
                                            const std::string& head_prefix,
                                            bool reverse) {
  int T = static_cast<int>(x.cols());
  RnnConfig rcfg{cfg.latent_dim, cfg.hidden, cfg.cell};
  RnnVarState st = rnn_zero_state(tape, rcfg);
  std::vector<Var> mus(T), vars_out(T);
  for (int k = 0; k < T; ++k) {
    int t = reverse ? T - 1 - k : k;
    Var xt = tape.constant(Matrix(x.col(t)));
    st = rnn_step_tape(tape, vars, rnn_prefix, rcfg, xt, st);
    auto [mu, var] = head_forward_tape(tape, vars, head_prefix, st.h);
    mus[t] = mu;
    vars_out[t] = var;
  }
  return {hstack(mus), hstack(vars_out)};
}

}  // namespace detail

// (mu, var) of q as L x T tape nodes. Variances are softplus outputs,
// strictly positive.
inline std::pair<Var, Var> variational_encode_tape(Tape& tape,
                                                   const ParamVars& vars,
                                                   const EncoderConfig& cfg,
                                                   const Matrix& x) {
  switch (cfg.family) {
    case Family::MF: {
      if (static_cast<int>(x.cols()) != cfg.timesteps)
        throw Error("variational_encode: MF locals sized for T=" +
                    std::to_string(cfg.timesteps));
      return {vars["q.mu"], softplus_(vars["q.rawvar"])};
    }
    case Family::VAE: {
      // shared per-time encoder applied column-wise
      Var xv = tape.constant(x);
      Var h1 = tanh_(add_colvec(matmul(vars["vae.W1"], xv), vars["vae.b1"]));
      Var h2 = tanh_(add_colvec(matmul(vars["vae.W2"], h1), vars["vae.b2"]));
      Var mu = add_colvec(matmul(vars["vae.Wmu"], h2), vars["vae.bmu"]);
      Var var = softplus_(
          add_colvec(matmul(vars["vae.Wsig"], h2), vars["vae.bsig"]));
      return {mu, var};
    }
    case Family::LLstm:
      return detail::lstm_encode_tape(tape, vars, cfg, x, "encl", "qheadl",
                                      false);
    case Family::RLstm:
      return detail::lstm_encode_tape(tape, vars, cfg, x, "encr", "qheadr",
                                      true);
    case Family::BiLstm: {
      auto [mul, varl] = detail::lstm_encode_tape(tape, vars, cfg, x, "encl",
                                                  "qheadl", false);
      auto [mur, varr] = detail::lstm_encode_tape(tape, vars, cfg, x, "encr",
                                                  "qheadr", true);
      return bilstm_combine_tape(mul, varl, mur, varr);
    }
  }
  throw Error("variational_encode: bad family");
}

inline VariationalPosterior variational_encode(const ParamVector& params,
                                               const EncoderConfig& cfg,
                                               const ObservationMatrix& x) {
  Tape tape;
  ParamVars vars(tape, params);
  auto [mu, var] = variational_encode_tape(tape, vars, cfg, x.values);
  return {tape.value(mu), tape.value(var)};
}

// z = mu + sqrt(var) .* eps, deterministic given eps.
inline LatentTrajectory reparam_sample(const VariationalPosterior& post,
                                       const Matrix& eps) {
  if (eps.rows() != post.mu.rows() || eps.cols() != post.mu.cols())
    throw Error("reparam_sample: eps shape mismatch");
  return post.mu + post.var.cwiseSqrt().cwiseProduct(eps);
}

inline Var reparam_sample_tape(Var mu, Var var, const Matrix& eps) {
  Tape& tape = *mu.tape;
  return add(mu, cmul(sqrt_(var), tape.constant(eps)));
}

// Closed-form entropy of the diagonal Gaussian posterior.
inline double gaussian_entropy(const VariationalPosterior& post) {
  if ((post.var.array() <= 0).any())
    throw Error("gaussian_entropy: variances must be > 0");
  double lt = static_cast<double>(post.var.size());
  return 0.5 * lt * (1.0 + kLog2Pi) +
         0.5 * post.var.array().log().sum();
}

inline Var gaussian_entropy_tape(Var var) {
  Tape& tape = *var.tape;
  double lt = static_cast<double>(tape.value(var).size());
  return add_const(scale(sum(log_(var)), 0.5), 0.5 * lt * (1.0 + kLog2Pi));
}

// log q(z) for a diagonal Gaussian posterior, plain value.
inline double diag_gaussian_logpdf_value(const Matrix& z, const Matrix& mu,
                                         const Matrix& var) {
  double lt = static_cast<double>(z.size());
  Matrix d = z - mu;
  return -0.5 * (d.cwiseProduct(d).cwiseQuotient(var).sum() +
                 var.array().log().sum() + lt * kLog2Pi);
}

}  // namespace gprnn
