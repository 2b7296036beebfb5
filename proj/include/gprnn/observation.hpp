// Observation likelihoods (Gaussian and Poisson) and the joint Poisson
// log-probability combining observation, GP and latent-prior terms.
#pragma once

#include "gprnn/gp.hpp"

namespace gprnn {

enum class ObsKind { Real, Counts };

struct ObservationMatrix {
  Matrix values;  // N x T
  ObsKind kind = ObsKind::Real;

  int neurons() const { return static_cast<int>(values.rows()); }
  int timesteps() const { return static_cast<int>(values.cols()); }

  void validate() const {
    if (!values.allFinite())
      throw Error("ObservationMatrix: non-finite entries");
    if (kind == ObsKind::Counts) {
      for (int j = 0; j < values.cols(); ++j)
        for (int i = 0; i < values.rows(); ++i) {
          double v = values(i, j);
          if (v < 0 || v != std::floor(v))
            throw Error("ObservationMatrix: counts must be non-negative "
                        "integers (offender at neuron " +
                        std::to_string(i) + ", t=" + std::to_string(j) + ")");
        }
    }
  }
};

// Rate exponent cap; triggers a diagnostic counter, never silent.
constexpr double kRateExpCap = 30.0;
inline long& poisson_clamp_hits() {
  static long hits = 0;
  return hits;
}

inline double gaussian_loglik(const Matrix& x, const TuningMatrix& f,
                              double l) {
  if (l <= 0) throw Error("gaussian_loglik: variance must be > 0");
  if (x.rows() != f.rows() || x.cols() != f.cols())
    throw Error("gaussian_loglik: shape mismatch");
  double n = static_cast<double>(x.size());
  double ss = (x - f).squaredNorm();
  return -0.5 * (ss / l + n * (std::log(l) + kLog2Pi));
}

// sum_{i,t} [x*f - exp(f) - log(x!)], rate = exp(f). log(x!) via
// log-gamma.
inline double poisson_loglik(const Matrix& x, const TuningMatrix& f) {
  if (x.rows() != f.rows() || x.cols() != f.cols())
    throw Error("poisson_loglik: shape mismatch");
  double total = 0.0;
  for (int j = 0; j < x.cols(); ++j)
    for (int i = 0; i < x.rows(); ++i) {
      double k = x(i, j);
      if (k < 0) throw Error("poisson_loglik: negative count");
      double fe = f(i, j);
      if (fe > kRateExpCap) {
        fe = kRateExpCap;
        ++poisson_clamp_hits();
      }
      total += k * fe - std::exp(fe) - std::lgamma(k + 1.0);
    }
  return total;
}

// Tape version; x is constant data, f a tape node (N x T).
inline Var poisson_loglik_tape(Tape& tape, const Matrix& x, Var f) {
  Matrix lg = x.unaryExpr([](double k) { return std::lgamma(k + 1.0); });
  Var fc = clamp_max(f, kRateExpCap, &poisson_clamp_hits());
  Var xv = tape.constant(x);
  Var s = sub(dot(xv, fc), sum(exp_(fc)));
  return add_const(s, -lg.sum());
}

// Eq-18-style joint: Poisson term + GP prior over each tuning row +
// latent RNN prior.
inline double joint_log_prob_poisson(const ObservationMatrix& x,
                                     const TuningMatrix& f,
                                     const LatentTrajectory& z,
                                     const ParamVector& rnn_params,
                                     const RnnConfig& cfg,
                                     const GpHyper& hyper) {
  x.validate();
  double total = poisson_loglik(x.values, f);
  for (int i = 0; i < x.neurons(); ++i)
    total += gp_log_prior_f(f.row(i).transpose(), z, hyper);
  total += latent_log_prior(rnn_params, cfg, z);
  return total;
}

}  // namespace gprnn
