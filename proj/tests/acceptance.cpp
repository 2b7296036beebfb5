// End-to-end acceptance gate. Each numbered check prints exactly one
// PASS/FAIL line on stdout; progress goes to stderr. Exit status is the
// number of failed checks. Optional argv: the subset of check numbers to
// run (default all).
#include <chrono>
#include <cstdarg>
#include <cstring>
#include <set>

#include "gprnn/experiment.hpp"

using namespace gprnn;

namespace {

double now_s() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch())
      .count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct CheckResult {
  bool pass = true;
  std::string detail;
};

void note(const std::string& s) {
  std::fprintf(stderr, "  .. %s\n", s.c_str());
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

// ---------------------------------------------------------------------
// 1. Finite-difference gradient checks on the full objectives.

CheckResult check_gradients() {
  double worst = 0.0;
  Family fams[] = {Family::MF, Family::VAE, Family::LLstm, Family::RLstm,
                   Family::BiLstm};
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(900 + seed);
    int L = 1 + static_cast<int>(rng.raw() % 2);
    int T = 2 + static_cast<int>(rng.raw() % 4);
    int N = 1 + static_cast<int>(rng.raw() % 3);
    int H = 2 + static_cast<int>(rng.raw() % 3);

    ModelConfig m;
    m.latent_dim = L;
    m.hidden = H;
    m.obs_dim = N;
    EncoderConfig enc{fams[seed % 5], L, N, T, H};
    ParamVector p = make_gaussian_params(m, enc, 910 + seed);
    Matrix x = rng.normal_matrix(N, T);
    Matrix eps = rng.normal_matrix(L, T);
    FiniteDiffReport g = finite_diff_check(
        [&](Tape& t, const ParamVars& v) {
          return elbo_tape(t, v, m, enc, x, eps);
        },
        p, 1e-5, 1e-4);
    worst = std::max(worst, g.max_relative_error);
    if (!g.pass)
      return {false, fmt("Gaussian ELBO fd failed at seed %d, rel err %.3e",
                         seed, g.max_relative_error)};

    ModelConfig mp = m;
    mp.observation = ObsKind::Counts;
    ObservationMatrix counts;
    counts.kind = ObsKind::Counts;
    counts.values.resize(N, T);
    for (int j = 0; j < T; ++j)
      for (int i = 0; i < N; ++i)
        counts.values(i, j) = rng.poisson(1.5);
    std::vector<ObservationMatrix> trials{counts};
    ParamVector pp = make_poisson_params(mp, trials, 920 + seed);
    FiniteDiffReport gp = finite_diff_check(
        [&](Tape& t, const ParamVars& v) {
          return poisson_joint_tape(t, v, mp, trials, 1.0);
        },
        pp, 1e-5, 1e-4);
    worst = std::max(worst, gp.max_relative_error);
    if (!gp.pass)
      return {false, fmt("Poisson joint fd failed at seed %d, rel err %.3e",
                         seed, gp.max_relative_error)};
  }
  return {true, fmt("20 seeds, worst rel err %.3e (tol 1e-4)", worst)};
}

// ---------------------------------------------------------------------
// 2. Brute-force oracle equivalence for the GP and prior likelihoods.

double mvn_zero_logpdf_oracle(const Vector& y, const Matrix& C) {
  int n = static_cast<int>(y.size());
  Matrix Cinv = C.inverse();
  double logdet = std::log(C.determinant());
  return -0.5 * (y.dot(Cinv * y) + logdet + n * kLog2Pi);
}

CheckResult check_oracles() {
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    Rng rng(930 + rep);
    int L = 1 + static_cast<int>(rng.raw() % 3);
    int T = 2 + static_cast<int>(rng.raw() % 5);
    GpHyper h{0.5 + rng.uniform(), 0.5 + rng.uniform(), 1e-6};
    // the explicit-inverse oracle is only meaningful on well-conditioned
    // instances: redraw until cond(K) is modest and no jitter escalation
    LatentTrajectory z;
    for (;;) {
      z = 2.0 * rng.normal_matrix(L, T);
      Matrix Kt = rbf_gram_raw(z, h) +
                  h.jitter * h.rho * Matrix::Identity(T, T);
      Eigen::SelfAdjointEigenSolver<Matrix> es(Kt);
      if (es.eigenvalues().minCoeff() >
          1e-5 * es.eigenvalues().maxCoeff())
        break;
    }
    Vector f = rng.normal_matrix(T, 1).col(0);

    // explicit-inverse oracles on the element-wise kernel matrix
    Matrix K(T, T);
    for (int i = 0; i < T; ++i)
      for (int j = 0; j < T; ++j)
        K(i, j) = h.rho * std::exp(-(z.col(i) - z.col(j)).squaredNorm() /
                                   (2.0 * h.sigma * h.sigma));
    Matrix Kj = K + h.jitter * h.rho * Matrix::Identity(T, T);

    // errors are relative to scale: near-singular directions make the
    // quadratic form large without either implementation being wrong
    auto rel = [](double a, double b) {
      return std::abs(a - b) / std::max(1.0, std::abs(b));
    };
    double e1 = rel(gp_log_prior_f(f, z, h), mvn_zero_logpdf_oracle(f, Kj));
    double l = 0.1 + rng.uniform();
    double e2 = rel(gp_log_marginal_gaussian(f, z, h, l),
                    mvn_zero_logpdf_oracle(f, Kj + l * Matrix::Identity(T, T)));

    Vector zs = rng.normal_matrix(L, 1).col(0);
    Vector ks(T);
    for (int t = 0; t < T; ++t)
      ks[t] = h.rho * std::exp(-(z.col(t) - zs).squaredNorm() /
                               (2.0 * h.sigma * h.sigma));
    Matrix Kinv = Kj.inverse();
    double mu_o = ks.dot(Kinv * f);
    double var_o = h.rho - ks.dot(Kinv * ks);
    auto [mu, var] = gp_posterior_predict(f, z, zs, h);
    double e3 = std::max(rel(mu, mu_o), rel(var, std::max(0.0, var_o)));

    // chain-walker oracle for the recurrent prior
    RnnConfig cfg{L, 2 + static_cast<int>(rng.raw() % 3), CellKind::LSTM};
    ParamVector p;
    add_rnn_segments(p, "rnn", cfg, L);
    add_head_segments(p, "head", cfg.hidden, cfg.hidden, L);
    init_rnn_params(p, "rnn", cfg, L, rng);
    init_head_params(p, "head", cfg.hidden, cfg.hidden, L, rng);
    LatentTrajectory zt = rng.normal_matrix(L, T);
    double slow = 0.0;
    RnnState st = RnnState::zero(cfg);
    Vector z_prev = Vector::Zero(L);
    for (int t = 0; t < T; ++t) {
      st = rnn_step(p, cfg, z_prev, st);
      auto [pm, pv] = prior_params(p, cfg, st);
      for (int d = 0; d < L; ++d) {
        double r = zt(d, t) - pm[d];
        slow += -0.5 * (kLog2Pi + std::log(pv[d]) + r * r / pv[d]);
      }
      z_prev = zt.col(t);
    }
    double e4 = rel(latent_log_prior(p, cfg, zt), slow);

    // pmf-summation oracle for the count likelihood
    Matrix fr = rng.normal_matrix(3, T);
    Matrix xc(3, T);
    for (int j = 0; j < T; ++j)
      for (int i = 0; i < 3; ++i) xc(i, j) = rng.poisson(std::exp(fr(i, j)));
    double pmf = 0.0;
    for (int j = 0; j < T; ++j)
      for (int i = 0; i < 3; ++i)
        pmf += xc(i, j) * fr(i, j) - std::exp(fr(i, j)) -
               std::lgamma(xc(i, j) + 1.0);
    double e5 = rel(poisson_loglik(xc, fr), pmf);

    worst = std::max({worst, e1, e2, e3, e4, e5});
    if (worst > 1e-9)
      return {false, fmt("oracle mismatch %.3e at rep %d "
                         "(prior %.1e marg %.1e post %.1e chain %.1e "
                         "pmf %.1e)",
                         worst, rep, e1, e2, e3, e4, e5)};
  }
  return {true, fmt("50 instances, worst rel err %.3e (tol 1e-9)", worst)};
}

// ---------------------------------------------------------------------
// 3. Closed-form entropy / combination / conditioning structure.

CheckResult check_closed_forms() {
  // entropy vs Monte Carlo -E[log q]
  Rng rng(940);
  VariationalPosterior post;
  post.mu = rng.normal_matrix(2, 3);
  post.var = rng.uniform_matrix(2, 3, 0.3, 2.5);
  int n = 100000;
  double sum = 0.0, sq = 0.0;
  for (int s = 0; s < n; ++s) {
    Matrix zz = reparam_sample(post, rng.normal_matrix(2, 3));
    double lq = diag_gaussian_logpdf_value(zz, post.mu, post.var);
    sum += -lq;
    sq += lq * lq;
  }
  double mean = sum / n;
  double se = std::sqrt((sq / n - mean * mean) / n);
  double ent = gaussian_entropy(post);
  if (std::abs(ent - mean) >= 3.0 * se)
    return {false, fmt("entropy %.6f vs MC %.6f exceeds 3 SE (%.2e)", ent,
                       mean, se)};

  // exact precision additivity of the bidirectional combination
  for (int rep = 0; rep < 1000; ++rep) {
    Matrix mul = rng.normal_matrix(2, 3), mur = rng.normal_matrix(2, 3);
    Matrix vl = rng.uniform_matrix(2, 3, 0.1, 5.0);
    Matrix vr = rng.uniform_matrix(2, 3, 0.1, 5.0);
    auto [cm, cv] = bilstm_combine(mul, vl, mur, vr);
    Matrix gap = cv.cwiseInverse() - vl.cwiseInverse() - vr.cwiseInverse();
    if (gap.cwiseAbs().maxCoeff() > 1e-9)
      return {false, fmt("precision additivity violated by %.3e at rep %d",
                         gap.cwiseAbs().maxCoeff(), rep)};
    Matrix mgap = cm - cv.cwiseProduct(mul.cwiseQuotient(vl) +
                                       mur.cwiseQuotient(vr));
    if (mgap.cwiseAbs().maxCoeff() > 1e-9)
      return {false, "precision-weighted mean formula violated"};
  }

  // conditioning structure: causal / anticausal / local / global
  ObservationMatrix x;
  x.values = rng.normal_matrix(3, 5);
  auto encode_with = [&](Family fam, const ObservationMatrix& obs) {
    EncoderConfig cfg{fam, 2, 3, 5, 4};
    ParamVector p;
    add_encoder_segments(p, cfg);
    Rng r2(941);
    init_encoder_params(p, cfg, r2);
    return variational_encode(p, cfg, obs);
  };
  for (int s = 0; s < 5; ++s) {
    ObservationMatrix xp = x;
    xp.values.col(s).array() += 10.0;
    VariationalPosterior bl = encode_with(Family::LLstm, x);
    VariationalPosterior pl = encode_with(Family::LLstm, xp);
    for (int t = 0; t < s; ++t)
      if ((bl.mu.col(t) - pl.mu.col(t)).cwiseAbs().maxCoeff() != 0.0)
        return {false, fmt("causal encoder leaked t=%d into t=%d", s, t)};
    VariationalPosterior br = encode_with(Family::RLstm, x);
    VariationalPosterior pr = encode_with(Family::RLstm, xp);
    for (int t = s + 1; t < 5; ++t)
      if ((br.mu.col(t) - pr.mu.col(t)).cwiseAbs().maxCoeff() != 0.0)
        return {false, fmt("anticausal encoder leaked t=%d into t=%d", s, t)};
    VariationalPosterior bv = encode_with(Family::VAE, x);
    VariationalPosterior pv = encode_with(Family::VAE, xp);
    for (int t = 0; t < 5; ++t) {
      double d = (bv.mu.col(t) - pv.mu.col(t)).cwiseAbs().maxCoeff();
      if (t == s ? d == 0.0 : d != 0.0)
        return {false, "per-time encoder is not time-local"};
    }
    VariationalPosterior bb = encode_with(Family::BiLstm, x);
    VariationalPosterior pb = encode_with(Family::BiLstm, xp);
    if ((bb.mu - pb.mu).cwiseAbs().maxCoeff() == 0.0)
      return {false, "bidirectional encoder ignored a time point"};
  }
  return {true, fmt("entropy within %.2f SE; additivity and conditioning "
                    "structure exact",
                    std::abs(ent - mean) / se)};
}

// ---------------------------------------------------------------------
// 4. Integrator order and fixed points.

CheckResult check_integrator() {
  LorenzParams p;
  double c = std::sqrt(p.beta_lz * (p.rho_lz - 1.0));
  for (double s : {1.0, -1.0}) {
    Eigen::Vector3d fp{s * c, s * c, p.rho_lz - 1.0};
    if (lorenz_deriv(fp, p).cwiseAbs().maxCoeff() >= 1e-10)
      return {false, "fixed-point derivative exceeds 1e-10"};
  }
  auto integrate_to = [&](Eigen::Vector3d z, double dt, double t_end) {
    long n = std::lround(t_end / dt);
    for (long i = 0; i < n; ++i) z = rk4_step(z, p, dt);
    return z;
  };
  Rng rng(950);
  double lo = 10.0, hi = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    Eigen::Vector3d z0{rng.uniform() * 20 - 10, rng.uniform() * 20 - 10,
                       rng.uniform() * 30 + 5};
    double dt = 2e-3, t_end = 0.25;
    Eigen::Vector3d ref = integrate_to(z0, dt / 100.0, t_end);
    double e1 = (integrate_to(z0, dt, t_end) - ref).norm();
    double e2 = (integrate_to(z0, dt / 2.0, t_end) - ref).norm();
    if (e2 < 1e-13) continue;
    double order = std::log2(e1 / e2);
    lo = std::min(lo, order);
    hi = std::max(hi, order);
    if (order < 3.5 || order > 4.5)
      return {false, fmt("measured order %.2f outside [3.5, 4.5]", order)};
  }
  return {true, fmt("order in [%.2f, %.2f]; fixed points within 1e-10", lo,
                    hi)};
}

// ---------------------------------------------------------------------
// 5/6. Family ordering and the dynamics ablation on the same data.

struct SineBench {
  LatentTrajectory z;
  ObservationMatrix x;
};

SineBench sine_bench() {
  SineBench b;
  MappingSpec spec = MappingSpec::random(MappingFn::Sine, 3, 50, 14, 1.0);
  LorenzParams lp;
  lp.subsample = 25;
  b.z = lorenz_integrate({1.0, 1.0, 25.0}, lp, 200);
  b.x = generate_observations(apply_mapping(b.z, spec), ObsKind::Real, 0.01,
                              15);
  return b;
}

double fit_rmse(const SineBench& b, DynamicsKind dyn, Family fam,
                std::uint64_t seed, long iters) {
  ModelConfig m;
  m.dynamics = dyn;
  m.latent_dim = 3;
  m.hidden = 30;
  m.obs_dim = 50;
  EncoderConfig enc{fam, 3, 50, 200, 30};
  TrainConfig tc;
  tc.max_iters = iters;
  tc.seed = seed;
  TrainResult res = train_gaussian(b.x, m, enc, tc);
  ObservationMatrix xc = b.x;
  xc.values = xc.values.colwise() - Vector(xc.values.rowwise().mean());
  VariationalPosterior post = variational_encode(res.params, enc, xc);
  return rmse_aligned(post.mu, b.z);
}

CheckResult check_family_ordering(const SineBench& b,
                                  std::vector<double>& bilstm_out) {
  std::map<Family, std::vector<double>> rm;
  for (Family fam : {Family::MF, Family::LLstm, Family::BiLstm})
    for (std::uint64_t s = 1; s <= 10; ++s) {
      double r = fit_rmse(b, DynamicsKind::Rnn, fam, s, 3000);
      rm[fam].push_back(r);
      note(fmt("%s seed %llu rmse %.4f", family_name(fam),
               (unsigned long long)s, r));
    }
  bilstm_out = rm[Family::BiLstm];
  double mf = median(rm[Family::MF]);
  double ll = median(rm[Family::LLstm]);
  double bi = median(rm[Family::BiLstm]);
  bool order = bi < ll && ll < mf;
  bool gaps = (ll - bi) / ll > 0.05 && (mf - ll) / mf > 0.05;
  return {order && gaps,
          fmt("median rmse: mf %.4f, l-lstm %.4f, bi-lstm %.4f "
              "(gaps %.1f%%, %.1f%%)",
              mf, ll, bi, 100.0 * (ll - bi) / ll, 100.0 * (mf - ll) / mf)};
}

CheckResult check_dynamics_ablation(const SineBench& b,
                                    const std::vector<double>& bilstm_rnn) {
  std::vector<double> ar1;
  for (std::uint64_t s = 1; s <= 10; ++s) {
    double r = fit_rmse(b, DynamicsKind::Ar1, Family::BiLstm, s, 3000);
    ar1.push_back(r);
    note(fmt("ar1 seed %llu rmse %.4f", (unsigned long long)s, r));
  }
  double rnn_med = median(bilstm_rnn);
  double ar1_med = median(ar1);
  double gap = (ar1_med - rnn_med) / ar1_med;
  return {gap > 0.15,
          fmt("median rmse: rnn %.4f vs ar1 %.4f (gap %.1f%%, need >15%%)",
              rnn_med, ar1_med, 100.0 * gap)};
}

// ---------------------------------------------------------------------
// 7. GP vs NN mapping on held-out forecasting, growing training sizes.

CheckResult check_mapping_ablation() {
  MappingSpec spec = MappingSpec::random(MappingFn::Tanh, 3, 50, 21, 1.0);
  LorenzParams lp;
  lp.subsample = 25;
  LatentTrajectory z = lorenz_integrate({1.0, 1.0, 25.0}, lp, 250);
  ObservationMatrix x_all = generate_observations(apply_mapping(z, spec),
                                                  ObsKind::Real, 0.01, 22);
  int sizes[] = {50, 100, 200};
  std::vector<double> gap_med;
  std::string detail;
  bool gp_wins_at_50 = false;
  for (int train_T : sizes) {
    std::vector<double> gp, nn;
    for (std::uint64_t s = 1; s <= 10; ++s) {
      for (MappingKind mk : {MappingKind::Gp, MappingKind::Nn}) {
        ModelConfig m;
        m.mapping = mk;
        m.latent_dim = 3;
        m.hidden = 30;
        m.obs_dim = 50;
        EncoderConfig enc{Family::BiLstm, 3, 50, train_T, 30};
        TrainConfig tc;
        tc.max_iters = 2000;
        tc.seed = s;
        ObservationMatrix xt;
        xt.kind = ObsKind::Real;
        xt.values = x_all.values.leftCols(train_T);
        TrainResult res = train_gaussian(xt, m, enc, tc);
        ObservationMatrix xc = xt;
        if (mk == MappingKind::Gp)
          xc.values = xc.values.colwise() -
                      Vector(xc.values.rowwise().mean());
        VariationalPosterior post = variational_encode(res.params, enc, xc);
        LatentTrajectory fc = forecast_latents(res.params, m, post.mu, 50);
        double r = rmse_aligned(fc, z.middleCols(train_T, 50));
        (mk == MappingKind::Gp ? gp : nn).push_back(r);
        note(fmt("T=%d %s seed %llu heldout rmse %.4f", train_T,
                 mk == MappingKind::Gp ? "gp" : "nn",
                 (unsigned long long)s, r));
      }
    }
    double gm = median(gp), nm = median(nn);
    if (train_T == 50) gp_wins_at_50 = gm < nm;
    gap_med.push_back(nm - gm);
    detail += fmt("T=%d gp %.4f nn %.4f; ", train_T, gm, nm);
  }
  bool shrinking = gap_med[0] >= gap_med[1] && gap_med[1] >= gap_med[2];
  return {gp_wins_at_50 && shrinking,
          detail + fmt("gaps %.4f -> %.4f -> %.4f", gap_med[0], gap_med[1],
                       gap_med[2])};
}

// ---------------------------------------------------------------------
// 8. Poisson MAP latent recovery from single-trial spike counts.

CheckResult check_poisson_recovery() {
  MappingSpec spec = MappingSpec::random(MappingFn::Tanh, 3, 50, 39, 1.0);
  LorenzParams lp;
  lp.subsample = 10;
  LatentTrajectory z = lorenz_integrate({1.0, 1.0, 25.0}, lp, 200);
  TuningMatrix f = (apply_mapping(z, spec).array() + 1.5).matrix();
  std::vector<std::vector<double>> r2(3);
  for (std::uint64_t s = 1; s <= 5; ++s) {
    ObservationMatrix x =
        generate_observations(f, ObsKind::Counts, 0.0, 32 + s);
    ModelConfig m;
    m.observation = ObsKind::Counts;
    m.latent_dim = 3;
    m.hidden = 30;
    m.obs_dim = 50;
    TrainConfig tc;
    tc.seed = s;
    tc.block_steps = 10;
    tc.max_blocks = 200;
    tc.adam.lr = 2e-2;
    PoissonTrainResult fit = train_poisson_map({x}, m, tc);
    LatentTrajectory est = fit.params.get(trial_seg("z", 0));
    auto [map, aligned] = affine_align(est, z);
    for (int d = 0; d < 3; ++d) {
      double v = r_squared(aligned.row(d).transpose(), z.row(d).transpose());
      r2[d].push_back(v);
    }
    note(fmt("poisson seed %llu r2 = %.3f %.3f %.3f",
             (unsigned long long)s, r2[0].back(), r2[1].back(),
             r2[2].back()));
  }
  double m1 = median(r2[0]), m2 = median(r2[1]), m3 = median(r2[2]);
  bool ok = m1 >= 0.70 && m2 >= 0.70 && m3 >= 0.90;
  return {ok, fmt("median aligned r2 = %.3f / %.3f / %.3f "
                  "(need 0.70 / 0.70 / 0.90)",
                  m1, m2, m3)};
}

// ---------------------------------------------------------------------
// 9. Co-smoothing self-consistency on synthetic spikes.

CheckResult check_cosmoothing() {
  int n_neurons = 40, T = 50;
  MappingSpec spec =
      MappingSpec::random(MappingFn::Tanh, 3, n_neurons, 41, 1.0);
  LorenzParams lp;
  lp.subsample = 25;
  Rng rng(42);
  std::vector<ObservationMatrix> train, test;
  for (int k = 0; k < 50; ++k) {
    Eigen::Vector3d z0{rng.uniform() * 20 - 10, rng.uniform() * 20 - 10,
                       rng.uniform() * 30 + 5};
    Matrix z3 = lorenz_integrate(z0, lp, T);
    TuningMatrix fk = (apply_mapping(z3, spec).array() + 1.3).matrix();
    ObservationMatrix x =
        generate_observations(fk, ObsKind::Counts, 0.0, 43 + k);
    (k < 40 ? train : test).push_back(x);
  }
  std::vector<double> med_by_L;
  double avg_at_2 = 0.0;
  std::string detail;
  for (int L : {2, 4, 6}) {
    ModelConfig m;
    m.observation = ObsKind::Counts;
    m.latent_dim = L;
    m.hidden = 10;
    m.obs_dim = n_neurons;
    TrainConfig tc;
    tc.seed = 44;
    tc.block_steps = 10;
    tc.max_blocks = 80;
    tc.adam.lr = 2e-2;
    PoissonTrainResult fit = train_poisson_map(train, m, tc);
    CosmoothModel cm = cosmooth_model_from(fit, m);
    CosmoothConfig cc;
    cc.infer_iters = 150;
    std::vector<double> per_neuron;
    for (int nrn = 0; nrn < n_neurons; ++nrn)
      per_neuron.push_back(cosmooth_r2(cm, test, nrn, cc));
    double avg = 0.0;
    for (double v : per_neuron) avg += v;
    avg /= per_neuron.size();
    if (L == 2) avg_at_2 = avg;
    med_by_L.push_back(median(per_neuron));
    detail += fmt("L=%d avg %.3f med %.3f; ", L, avg, med_by_L.back());
    note(fmt("cosmooth L=%d avg r2 %.3f median %.3f", L, avg,
             med_by_L.back()));
  }
  bool ok = avg_at_2 > 0.6 && med_by_L[0] <= med_by_L[1] &&
            med_by_L[1] <= med_by_L[2];
  return {ok, detail + "(need avg>0.6 at L=2, non-decreasing medians)"};
}

// ---------------------------------------------------------------------
// 10. Determinism and checkpoint resume.

CheckResult check_determinism() {
  MappingSpec spec = MappingSpec::random(MappingFn::Sine, 3, 8, 51, 1.0);
  LorenzParams lp;
  lp.subsample = 25;
  LatentTrajectory z = lorenz_integrate({1.0, 1.0, 25.0}, lp, 30);
  ObservationMatrix x = generate_observations(apply_mapping(z, spec),
                                              ObsKind::Real, 0.05, 52);
  ModelConfig m;
  m.latent_dim = 2;
  m.hidden = 5;
  m.obs_dim = 8;
  EncoderConfig enc{Family::BiLstm, 2, 8, 30, 5};
  TrainConfig tc;
  tc.max_iters = 40;
  tc.seed = 53;

  TrainResult a = train_gaussian(x, m, enc, tc);
  TrainResult bb = train_gaussian(x, m, enc, tc);
  if (a.report.iters.size() != bb.report.iters.size())
    return {false, "report lengths differ between identical runs"};
  for (std::size_t i = 0; i < a.report.iters.size(); ++i)
    if (a.report.iters[i].objective != bb.report.iters[i].objective ||
        a.report.iters[i].grad_norm != bb.report.iters[i].grad_norm)
      return {false, fmt("report diverges at iteration %zu", i)};

  // checkpoint at iteration 20, resume, and compare to the straight run
  TrainConfig half = tc;
  half.max_iters = 20;
  TrainResult part = train_gaussian(x, m, enc, half);
  std::string path = fs::temp_directory_path() / "acc_resume.json";
  save_checkpoint({part.last_params, "acc", true, part.adam, part.next_iter},
                  path);
  Checkpoint ck = load_checkpoint(path, "acc");
  TrainResult rest = train_gaussian(x, m, enc, tc, &ck.params, &ck.adam,
                                    ck.next_iter);
  fs::remove(path);
  if (rest.last_params.values != a.last_params.values)
    return {false, "resumed run diverged from the uninterrupted run"};
  return {true, "bit-identical reports; checkpoint resume matches exactly"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto wanted = [&](int n) { return only.empty() || only.count(n); };

  int failures = 0;
  SineBench bench;
  std::vector<double> bilstm_rnn;
  bool have_bench = false;

  auto run = [&](int n, const char* name, auto&& fn) {
    if (!wanted(n)) return;
    std::fprintf(stderr, "running criterion %d: %s\n", n, name);
    double t0 = now_s();
    CheckResult r;
    try {
      r = fn();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    if (!r.pass) ++failures;
    std::printf("%s criterion %d: %s — %s [%.0fs]\n",
                r.pass ? "PASS" : "FAIL", n, name, r.detail.c_str(),
                now_s() - t0);
    std::fflush(stdout);
  };

  run(1, "gradient correctness", check_gradients);
  run(2, "oracle equivalence", check_oracles);
  run(3, "closed-form checks", check_closed_forms);
  run(4, "Lorenz integrator", check_integrator);
  run(5, "inference-network ordering", [&] {
    bench = sine_bench();
    have_bench = true;
    return check_family_ordering(bench, bilstm_rnn);
  });
  run(6, "dynamics ablation", [&] {
    if (!have_bench) bench = sine_bench();
    if (bilstm_rnn.empty())
      for (std::uint64_t s = 1; s <= 10; ++s) {
        bilstm_rnn.push_back(
            fit_rmse(bench, DynamicsKind::Rnn, Family::BiLstm, s, 3000));
        note(fmt("rnn seed %llu rmse %.4f", (unsigned long long)s,
                 bilstm_rnn.back()));
      }
    return check_dynamics_ablation(bench, bilstm_rnn);
  });
  run(7, "mapping ablation", check_mapping_ablation);
  run(8, "Poisson latent recovery", check_poisson_recovery);
  run(9, "co-smoothing self-consistency", check_cosmoothing);
  run(10, "determinism and persistence", check_determinism);
  return failures;
}
