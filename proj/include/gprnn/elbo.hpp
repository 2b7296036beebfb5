// Model assembly and the reparameterized ELBO for Gaussian
// observations, with the score-function estimator kept as a
// cross-check.
#pragma once

#include "gprnn/encoder.hpp"

namespace gprnn {

enum class DynamicsKind { Rnn, Ar1 };
enum class MappingKind { Gp, Nn };

struct ModelConfig {
  DynamicsKind dynamics = DynamicsKind::Rnn;
  MappingKind mapping = MappingKind::Gp;
  ObsKind observation = ObsKind::Real;
  int latent_dim = 3;
  int hidden = 30;
  int obs_dim = 50;
  CellKind cell = CellKind::LSTM;
  double l2_coeff = 1e-4;     // on RNN gate weights
  double jitter = 1e-6;       // relative diagonal jitter for K

  RnnConfig rnn() const { return {latent_dim, hidden, cell}; }
};

inline void add_model_segments(ParamVector& p, const ModelConfig& m) {
  if (m.dynamics == DynamicsKind::Rnn) {
    add_rnn_segments(p, "rnn", m.rnn(), m.latent_dim);
    add_head_segments(p, "head", m.hidden, m.hidden, m.latent_dim);
  } else {
    add_ar1_segments(p, m.latent_dim);
  }
  if (m.mapping == MappingKind::Gp) {
    add_gp_segments(p);
  } else {
    add_nn_map_segments(p, m.latent_dim, m.hidden, m.obs_dim);
  }
  p.add("obs.logl", 1, 1);  // Gaussian noise variance, log space
}

inline void init_model_params(ParamVector& p, const ModelConfig& m,
                              Rng& rng) {
  if (m.dynamics == DynamicsKind::Rnn) {
    init_rnn_params(p, "rnn", m.rnn(), m.latent_dim, rng);
    init_head_params(p, "head", m.hidden, m.hidden, m.latent_dim, rng);
  } else {
    init_ar1_params(p, m.latent_dim);
  }
  if (m.mapping == MappingKind::Gp) {
    p.set_scalar("gp.logrho", 0.0);
    p.set_scalar("gp.logsigma", 0.0);
  } else {
    init_nn_map_params(p, m.latent_dim, m.hidden, m.obs_dim, rng);
  }
  p.set_scalar("obs.logl", std::log(0.5));
}

inline ParamVector make_gaussian_params(const ModelConfig& m,
                                        const EncoderConfig& enc,
                                        std::uint64_t seed) {
  ParamVector p;
  add_model_segments(p, m);
  add_encoder_segments(p, enc);
  Rng rng(seed);
  init_model_params(p, m, rng);
  init_encoder_params(p, enc, rng);
  return p;
}

// Gaussian observation log-likelihood with variance exp(logl), on tape.
inline Var gaussian_loglik_tape(Tape& tape, const Matrix& x, Var f,
                                Var logl) {
  double n = static_cast<double>(x.size());
  Var d = sub(tape.constant(x), f);
  Var ss = sum(cmul(d, d));
  Var quad = smul(exp_(neg(logl)), ss);
  return scale(add(quad, add_const(scale(logl, n), n * kLog2Pi)), -0.5);
}

// log p_Theta(z, x) for the Gaussian model (GP mapping marginalized,
// or explicit NN mapping) plus the latent prior, minus regularization.
inline Var gaussian_logjoint_tape(Tape& tape, const ParamVars& vars,
                                  const ModelConfig& m, const Matrix& x,
                                  Var z, double jitter_mult = 1.0) {
  Var logp;
  if (m.mapping == MappingKind::Gp) {
    double jitter_abs = m.jitter * jitter_mult *
                        std::exp(tape.value(vars["gp.logrho"])(0, 0));
    logp = gp_marginal_sum_tape(tape, vars, z,
                                tape.constant(Matrix(x.transpose())),
                                jitter_abs);
  } else {
    Var f = nn_map_forward_tape(tape, vars, z);
    logp = gaussian_loglik_tape(tape, x, f, vars["obs.logl"]);
  }
  Var prior = m.dynamics == DynamicsKind::Rnn
                  ? latent_log_prior_tape(tape, vars, m.rnn(), z)
                  : ar1_log_prior_tape(tape, vars, z);
  Var total = add(logp, prior);
  if (m.dynamics == DynamicsKind::Rnn && m.l2_coeff > 0)
    total = sub(total, rnn_l2_penalty_tape(tape, vars, "rnn", m.l2_coeff));
  return total;
}

// log q(z) where z, mu, var are L x T stacks.
inline Var diag_gaussian_logpdf_from_stacks(Var z, Var mu, Var var) {
  Tape& tape = *z.tape;
  double lt = static_cast<double>(tape.value(z).size());
  Var d = sub(z, mu);
  Var quad = sum(cdiv(cmul(d, d), var));
  Var logdet = sum(log_(var));
  return add_const(scale(add(quad, logdet), -0.5), -0.5 * lt * kLog2Pi);
}

// Single-sample reparameterized ELBO term on tape: log p(z(eps), x) +
// entropy(q) (closed form) by default, or log p - log q(z) when
// `sampled_entropy` is set.
inline Var elbo_tape(Tape& tape, const ParamVars& vars, const ModelConfig& m,
                     const EncoderConfig& enc, const Matrix& x,
                     const Matrix& eps, bool sampled_entropy = false,
                     double jitter_mult = 1.0) {
  auto [mu, var] = variational_encode_tape(tape, vars, enc, x);
  Var z = reparam_sample_tape(mu, var, eps);
  Var logp = gaussian_logjoint_tape(tape, vars, m, x, z, jitter_mult);
  if (!sampled_entropy) return add(logp, gaussian_entropy_tape(var));
  Var logq = diag_gaussian_logpdf_from_stacks(z, mu, var);
  return sub(logp, logq);
}

// Monte-Carlo ELBO estimate over S reparameterization draws.
inline double elbo_estimate(const ParamVector& params, const ModelConfig& m,
                            const EncoderConfig& enc,
                            const ObservationMatrix& x, int S,
                            std::uint64_t seed,
                            bool sampled_entropy = false) {
  if (S < 1) throw Error("elbo_estimate: S must be >= 1");
  if (x.kind != ObsKind::Real)
    throw Error("elbo_estimate: Gaussian-kind observations required");
  Rng rng(seed);
  double total = 0.0;
  for (int s = 0; s < S; ++s) {
    Matrix eps = rng.normal_matrix(enc.latent_dim,
                                   static_cast<int>(x.values.cols()));
    Tape tape;
    ParamVars vars(tape, params);
    Var v = elbo_tape(tape, vars, m, enc, x.values, eps, sampled_entropy);
    total += tape.scalar_value(v);
  }
  return total / S;
}

// REINFORCE-style estimator of the ELBO gradient (Theta gets the
// pathwise-free energy term, phi the score-function term). Kept as a
// diagnostic cross-check; training uses the reparameterized gradient.
inline GradVector score_function_grad(const ParamVector& params,
                                      const ModelConfig& m,
                                      const EncoderConfig& enc,
                                      const ObservationMatrix& x, int S,
                                      std::uint64_t seed) {
  if (S < 1) throw Error("score_function_grad: S must be >= 1");
  Rng rng(seed);
  GradVector acc = params.zeros_like();
  VariationalPosterior post = variational_encode(params, enc, x);
  for (int s = 0; s < S; ++s) {
    Matrix eps = rng.normal_matrix(static_cast<int>(post.mu.rows()),
                                   static_cast<int>(post.mu.cols()));
    Matrix zs = reparam_sample(post, eps);
    Tape tape;
    ParamVars vars(tape, params);
    Var z = tape.constant(zs);
    Var logp = gaussian_logjoint_tape(tape, vars, m, x.values, z);
    auto [mu, var] = variational_encode_tape(tape, vars, enc, x.values);
    Var logq = diag_gaussian_logpdf_from_stacks(z, mu, var);
    double logp_v = tape.scalar_value(logp);
    double logq_v = tape.scalar_value(logq);
    tape.backward(logp);
    GradVector glogp = vars.collect_grads(tape);
    tape.backward(logq);
    GradVector glogq = vars.collect_grads(tape);
    acc.values += glogp.values + (logp_v - logq_v) * glogq.values;
  }
  acc.values /= static_cast<double>(S);
  return acc;
}

}  // namespace gprnn
