// Lorenz-system ground-truth generator and observation synthesis for
// the desk-scale experiments.
#pragma once

#include "gprnn/observation.hpp"

namespace gprnn {

struct LorenzParams {
  double sigma_lz = 10.0;
  double rho_lz = 28.0;
  double beta_lz = 8.0 / 3.0;
  double dt = 1e-3;
  int subsample = 1;
  int burn_in = 1000;  // RK4 steps discarded before emitting
};

inline Eigen::Vector3d lorenz_deriv(const Eigen::Vector3d& z,
                                    const LorenzParams& p) {
  return {p.sigma_lz * (z[1] - z[0]),
          z[0] * (p.rho_lz - z[2]) - z[1],
          z[0] * z[1] - p.beta_lz * z[2]};
}

inline Eigen::Vector3d rk4_step(const Eigen::Vector3d& z,
                                const LorenzParams& p, double dt) {
  Eigen::Vector3d k1 = lorenz_deriv(z, p);
  Eigen::Vector3d k2 = lorenz_deriv(z + 0.5 * dt * k1, p);
  Eigen::Vector3d k3 = lorenz_deriv(z + 0.5 * dt * k2, p);
  Eigen::Vector3d k4 = lorenz_deriv(z + dt * k3, p);
  return z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// Raw RK4 path: T states after burn-in, keeping every `subsample`-th
// step, no standardization.
inline Matrix lorenz_integrate_raw(Eigen::Vector3d z0, const LorenzParams& p,
                                   int T) {
  if (T < 1) throw Error("lorenz_integrate: T must be >= 1");
  if (p.dt <= 0) throw Error("lorenz_integrate: dt must be > 0");
  for (int i = 0; i < p.burn_in; ++i) z0 = rk4_step(z0, p, p.dt);
  Matrix out(3, T);
  Eigen::Vector3d z = z0;
  for (int t = 0; t < T; ++t) {
    out.col(t) = z;
    if (z.norm() > 1e6) throw Error("lorenz_integrate: trajectory diverged");
    for (int s = 0; s < std::max(1, p.subsample); ++s)
      z = rk4_step(z, p, p.dt);
  }
  return out;
}

// Standardize each row to zero mean / unit variance over the emitted
// window; constant rows become zeros instead of dividing by zero.
inline Matrix standardize_rows(const Matrix& m) {
  Matrix out = m;
  int T = static_cast<int>(m.cols());
  for (int d = 0; d < m.rows(); ++d) {
    double mean = m.row(d).mean();
    double var = (m.row(d).array() - mean).square().sum() / T;
    if (var < 1e-300) {
      out.row(d).setZero();
    } else {
      out.row(d) = (m.row(d).array() - mean) / std::sqrt(var);
    }
  }
  return out;
}

inline LatentTrajectory lorenz_integrate(const Eigen::Vector3d& z0,
                                         const LorenzParams& p, int T) {
  return standardize_rows(lorenz_integrate_raw(z0, p, T));
}

enum class MappingFn { Linear, Tanh, Sine };

inline MappingFn mapping_from_name(const std::string& s) {
  if (s == "linear") return MappingFn::Linear;
  if (s == "tanh") return MappingFn::Tanh;
  if (s == "sine") return MappingFn::Sine;
  throw Error("unknown mapping '" + s + "'");
}

inline const char* mapping_name(MappingFn m) {
  switch (m) {
    case MappingFn::Linear: return "linear";
    case MappingFn::Tanh: return "tanh";
    case MappingFn::Sine: return "sine";
  }
  return "?";
}

struct MappingSpec {
  MappingFn kind = MappingFn::Linear;
  Matrix w;       // L x N
  Vector phi;     // N offsets
  double noise_variance = 1.0;

  // Weights and offsets drawn Uniform[0, 1], seeded.
  static MappingSpec random(MappingFn kind, int latent_dim, int n_neurons,
                            std::uint64_t seed, double noise_variance = 1.0) {
    Rng rng(seed);
    MappingSpec m;
    m.kind = kind;
    m.w = rng.uniform_matrix(latent_dim, n_neurons);
    m.phi = rng.uniform_matrix(n_neurons, 1).col(0);
    m.noise_variance = noise_variance;
    return m;
  }
};

// Noise-free w^T z + phi through the configured nonlinearity (N x T).
inline TuningMatrix apply_mapping(const LatentTrajectory& z,
                                  const MappingSpec& m) {
  if (z.rows() != m.w.rows()) throw Error("apply_mapping: shape mismatch");
  Matrix lin = (m.w.transpose() * z).colwise() + m.phi;
  switch (m.kind) {
    case MappingFn::Linear: return lin;
    case MappingFn::Tanh: return lin.array().tanh();
    case MappingFn::Sine: return lin.array().sin();
  }
  throw Error("apply_mapping: bad kind");
}

// Gaussian: F + eta; Poisson: counts with rate exp(F). Seeded.
inline ObservationMatrix generate_observations(const TuningMatrix& f,
                                               ObsKind kind,
                                               double noise_variance,
                                               std::uint64_t seed) {
  Rng rng(seed);
  ObservationMatrix x;
  x.kind = kind;
  if (kind == ObsKind::Real) {
    double sd = std::sqrt(std::max(0.0, noise_variance));
    x.values = f + sd * rng.normal_matrix(static_cast<int>(f.rows()),
                                          static_cast<int>(f.cols()));
  } else {
    if ((f.array() > kRateExpCap).any())
      throw Error("generate_observations: rate exponent overflow");
    x.values.resize(f.rows(), f.cols());
    for (int j = 0; j < f.cols(); ++j)
      for (int i = 0; i < f.rows(); ++i)
        x.values(i, j) = rng.poisson(std::exp(f(i, j)));
  }
  return x;
}

}  // namespace gprnn
