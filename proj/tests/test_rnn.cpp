#include <catch2/catch_amalgamated.hpp>

#include "gprnn/rnn.hpp"

using namespace gprnn;

namespace {

// Hand-coded single LSTM step, independent of the tape code.
RnnState lstm_oracle(const ParamVector& p, const RnnConfig& cfg,
                     const Vector& x, const RnnState& prev) {
  int H = cfg.hidden;
  Matrix Wx = p.get("rnn.Wx"), Wh = p.get("rnn.Wh"), b = p.get("rnn.b");
  Vector pre = Wx * x + Wh * prev.hidden + b.col(0);
  Vector h(H), c(H);
  for (int k = 0; k < H; ++k) {
    double i = sigmoid(pre[k]);
    double f = sigmoid(pre[H + k]);
    double g = std::tanh(pre[2 * H + k]);
    double o = sigmoid(pre[3 * H + k]);
    c[k] = f * prev.cell[k] + i * g;
    h[k] = o * std::tanh(c[k]);
  }
  return {h, c};
}

ParamVector random_rnn(const RnnConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  ParamVector p;
  add_rnn_segments(p, "rnn", cfg, cfg.latent_dim);
  add_head_segments(p, "head", cfg.hidden, cfg.hidden, cfg.latent_dim);
  init_rnn_params(p, "rnn", cfg, cfg.latent_dim, rng);
  init_head_params(p, "head", cfg.hidden, cfg.hidden, cfg.latent_dim, rng);
  return p;
}

}  // namespace

TEST_CASE("zero parameters keep the LSTM hidden state at zero", "[rnn]") {
  RnnConfig cfg{2, 3, CellKind::LSTM};
  ParamVector p;
  add_rnn_segments(p, "rnn", cfg, 2);
  RnnState st = RnnState::zero(cfg);
  Vector z = (Vector(2) << 1.0, -2.0).finished();
  RnnState out = rnn_step(p, cfg, z, st);
  REQUIRE(out.hidden.isZero());
  REQUIRE(out.cell.isZero());
}

TEST_CASE("LSTM step matches a hand-unrolled oracle", "[rnn]") {
  RnnConfig cfg{2, 3, CellKind::LSTM};
  ParamVector p = random_rnn(cfg, 21);
  Rng rng(22);
  RnnState prev{rng.normal_matrix(3, 1).col(0), rng.normal_matrix(3, 1).col(0)};
  Vector z = rng.normal_matrix(2, 1).col(0);
  RnnState a = rnn_step(p, cfg, z, prev);
  RnnState b = lstm_oracle(p, cfg, z, prev);
  REQUIRE((a.hidden - b.hidden).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE((a.cell - b.cell).cwiseAbs().maxCoeff() < 1e-12);

  RnnState again = rnn_step(p, cfg, z, prev);
  REQUIRE(again.hidden == a.hidden);
}

TEST_CASE("GRU step gradient passes finite differences", "[rnn]") {
  RnnConfig cfg{2, 3, CellKind::GRU};
  Rng rng(23);
  ParamVector p;
  add_rnn_segments(p, "rnn", cfg, 2);
  init_rnn_params(p, "rnn", cfg, 2, rng);
  Matrix x = rng.normal_matrix(2, 1);
  auto f = [&](Tape& t, const ParamVars& v) {
    RnnVarState st = rnn_zero_state(t, cfg);
    st = rnn_step_tape(t, v, "rnn", cfg, t.constant(x), st);
    st = rnn_step_tape(t, v, "rnn", cfg, t.constant(x), st);
    return sum(cmul(st.h, st.h));
  };
  REQUIRE(finite_diff_check(f, p, 1e-5, 1e-6).pass);
}

TEST_CASE("zero-weight prior head gives mu 0 and variance softplus(0)", "[rnn]") {
  RnnConfig cfg{2, 3, CellKind::LSTM};
  ParamVector p;
  add_rnn_segments(p, "rnn", cfg, 2);
  add_head_segments(p, "head", 3, 3, 2);
  Rng rng(24);
  RnnState st{rng.normal_matrix(3, 1).col(0), Vector::Zero(3)};
  auto [mu, var] = prior_params(p, cfg, st);
  REQUIRE(mu.isZero());
  REQUIRE(var(0) == Catch::Approx(std::log(2.0)).margin(1e-12));
  REQUIRE(var(1) == Catch::Approx(std::log(2.0)).margin(1e-12));
}

TEST_CASE("prior head matches a hand-evaluated forward pass", "[rnn]") {
  RnnConfig cfg{2, 3, CellKind::LSTM};
  ParamVector p = random_rnn(cfg, 25);
  Rng rng(26);
  Vector h = rng.normal_matrix(3, 1).col(0);
  auto [mu, var] = prior_params(p, cfg, {h, Vector::Zero(3)});
  Vector h1 = (p.get("head.W1") * h + p.get("head.b1").col(0))
                  .array().tanh();
  Vector h2 = (p.get("head.W2") * h1 + p.get("head.b2").col(0))
                  .array().tanh();
  Vector mu_o = p.get("head.Wmu") * h2 + p.get("head.bmu").col(0);
  Vector raw = p.get("head.Wsig") * h2 + p.get("head.bsig").col(0);
  for (int d = 0; d < 2; ++d) {
    REQUIRE(mu[d] == Catch::Approx(mu_o[d]).margin(1e-12));
    REQUIRE(var[d] == Catch::Approx(softplus(raw[d])).margin(1e-12));
    REQUIRE(var[d] > 0.0);
  }
}

TEST_CASE("variance head output is positive for random parameters", "[rnn]") {
  RnnConfig cfg{3, 4, CellKind::LSTM};
  for (std::uint64_t s = 1; s <= 20; ++s) {
    ParamVector p = random_rnn(cfg, s);
    Rng rng(100 + s);
    auto [mu, var] = prior_params(p, cfg,
                                  {5.0 * rng.normal_matrix(4, 1).col(0),
                                   Vector::Zero(4)});
    REQUIRE((var.array() > 0).all());
  }
}

TEST_CASE("chain-walker oracle for the latent log prior", "[rnn]") {
  RnnConfig cfg{2, 3, CellKind::LSTM};
  ParamVector p = random_rnn(cfg, 31);
  Rng rng(32);
  LatentTrajectory z = rng.normal_matrix(2, 4);
  double fast = latent_log_prior(p, cfg, z);

  // independent walker: roll state with the single-step functions and
  // accumulate scalar normal densities
  double slow = 0.0;
  RnnState st = RnnState::zero(cfg);
  Vector z_prev = Vector::Zero(2);
  for (int t = 0; t < 4; ++t) {
    st = rnn_step(p, cfg, z_prev, st);
    auto [mu, var] = prior_params(p, cfg, st);
    for (int d = 0; d < 2; ++d) {
      double r = z(d, t) - mu[d];
      slow += -0.5 * (kLog2Pi + std::log(var[d]) + r * r / var[d]);
    }
    z_prev = z.col(t);
  }
  REQUIRE(fast == Catch::Approx(slow).margin(1e-10));
}

TEST_CASE("latent log prior is additive over a time split", "[rnn]") {
  RnnConfig cfg{2, 3, CellKind::LSTM};
  ParamVector p = random_rnn(cfg, 33);
  Rng rng(34);
  LatentTrajectory z = rng.normal_matrix(2, 6);
  double whole = latent_log_prior(p, cfg, z);

  double head_part = latent_log_prior(p, cfg, z.leftCols(3));
  // remainder: conditionals for t = 4..6 with the state rolled through
  // the first 3 steps
  RnnState st = RnnState::zero(cfg);
  Vector z_prev = Vector::Zero(2);
  for (int t = 0; t < 3; ++t) {
    st = rnn_step(p, cfg, z_prev, st);
    z_prev = z.col(t);
  }
  double rest = 0.0;
  for (int t = 3; t < 6; ++t) {
    st = rnn_step(p, cfg, z_prev, st);
    auto [mu, var] = prior_params(p, cfg, st);
    for (int d = 0; d < 2; ++d) {
      double r = z(d, t) - mu[d];
      rest += -0.5 * (kLog2Pi + std::log(var[d]) + r * r / var[d]);
    }
    z_prev = z.col(t);
  }
  REQUIRE(whole == Catch::Approx(head_part + rest).margin(1e-10));
}

TEST_CASE("latent log prior gradient passes finite differences", "[rnn]") {
  RnnConfig cfg{2, 3, CellKind::LSTM};
  ParamVector p = random_rnn(cfg, 35);
  Rng rng(36);
  p.add("z", 2, 4);
  p.set("z", rng.normal_matrix(2, 4));
  auto f = [&](Tape& t, const ParamVars& v) {
    return latent_log_prior_tape(t, v, cfg, v["z"]);
  };
  REQUIRE(finite_diff_check(f, p, 1e-5, 1e-4).pass);
}

TEST_CASE("prior sampling is seeded and statistically calibrated", "[rnn]") {
  RnnConfig cfg{1, 3, CellKind::LSTM};
  // zero head: every step is N(0, softplus(0) = log 2)
  ParamVector p;
  add_rnn_segments(p, "rnn", cfg, 1);
  add_head_segments(p, "head", 3, 3, 1);

  LatentTrajectory a = sample_prior(p, cfg, 10, 77);
  LatentTrajectory b = sample_prior(p, cfg, 10, 77);
  REQUIRE(a == b);
  REQUIRE(std::isfinite(latent_log_prior(p, cfg, a)));

  int n = 10000;
  LatentTrajectory big = sample_prior(p, cfg, n, 78);
  double mean = big.row(0).mean();
  double var = (big.row(0).array() - mean).square().sum() / (n - 1);
  double target = std::log(2.0);
  // variance of the sample variance for a normal: 2 sigma^4 / (n-1)
  double se_var = std::sqrt(2.0 * target * target / (n - 1));
  REQUIRE(std::abs(var - target) < 3.0 * se_var);
  REQUIRE(std::abs(mean) < 3.0 * std::sqrt(target / n));
}

TEST_CASE("AR1 log prior against a direct Markov-chain oracle", "[rnn]") {
  SECTION("iid standard normal special case") {
    Ar1Params ap{Vector::Zero(1), Vector::Ones(1), Vector::Zero(1),
                 Vector::Ones(1)};
    LatentTrajectory z = Matrix::Zero(1, 2);
    REQUIRE(ar1_log_prior(ap, z) ==
            Catch::Approx(2.0 * (-0.5 * kLog2Pi)).margin(1e-12));
  }
  SECTION("a=1, q=1, z=(0,0)") {
    Ar1Params ap{Vector::Ones(1), Vector::Ones(1), Vector::Zero(1),
                 Vector::Ones(1)};
    LatentTrajectory z = Matrix::Zero(1, 2);
    REQUIRE(ar1_log_prior(ap, z) ==
            Catch::Approx(2.0 * (-0.5 * kLog2Pi)).margin(1e-12));
  }
  SECTION("random instance, plain vs tape vs oracle") {
    Rng rng(41);
    int L = 3, T = 5;
    Ar1Params ap{rng.uniform_matrix(L, 1, -1, 1).col(0),
                 rng.uniform_matrix(L, 1, 0.2, 2.0).col(0),
                 rng.normal_matrix(L, 1).col(0),
                 rng.uniform_matrix(L, 1, 0.2, 2.0).col(0)};
    LatentTrajectory z = rng.normal_matrix(L, T);
    double oracle = 0.0;
    auto logn = [](double x, double m, double q) {
      double r = x - m;
      return -0.5 * (kLog2Pi + std::log(q) + r * r / q);
    };
    for (int d = 0; d < L; ++d) {
      oracle += logn(z(d, 0), ap.mu0[d], ap.q0[d]);
      for (int t = 1; t < T; ++t)
        oracle += logn(z(d, t), ap.a[d] * z(d, t - 1), ap.q[d]);
    }
    REQUIRE(ar1_log_prior(ap, z) == Catch::Approx(oracle).margin(1e-12));

    ParamVector p;
    add_ar1_segments(p, L);
    p.set("ar1.a", ap.a);
    p.set("ar1.logq", ap.q.array().log().matrix());
    p.set("ar1.mu0", ap.mu0);
    p.set("ar1.logq0", ap.q0.array().log().matrix());
    p.add("z", L, T);
    p.set("z", z);
    Tape tape;
    ParamVars vars(tape, p);
    Var v = ar1_log_prior_tape(tape, vars, vars["z"]);
    REQUIRE(tape.scalar_value(v) == Catch::Approx(oracle).margin(1e-10));
    auto f = [](Tape& t, const ParamVars& vv) {
      return ar1_log_prior_tape(t, vv, vv["z"]);
    };
    REQUIRE(finite_diff_check(f, p, 1e-5, 1e-5).pass);
  }
}

TEST_CASE("recurrent blocks are orthogonal at initialization", "[rnn]") {
  RnnConfig cfg{3, 8, CellKind::LSTM};
  Rng rng(51);
  ParamVector p;
  add_rnn_segments(p, "rnn", cfg, 3);
  init_rnn_params(p, "rnn", cfg, 3, rng);
  Matrix wh = p.get("rnn.Wh");
  for (int k = 0; k < 4; ++k) {
    Matrix blk = wh.middleRows(k * 8, 8);
    REQUIRE((blk.transpose() * blk - Matrix::Identity(8, 8))
                .cwiseAbs().maxCoeff() < 1e-8);
  }
}
