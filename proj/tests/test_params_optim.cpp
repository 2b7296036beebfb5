#include <catch2/catch_amalgamated.hpp>

#include "gprnn/rnn.hpp"

using namespace gprnn;

TEST_CASE("segment write-then-read is identity", "[params]") {
  Rng rng(1);
  ParamVector p;
  p.add("a", 2, 3);
  p.add("b", 4, 1);
  Matrix m = rng.normal_matrix(2, 3);
  p.set("a", m);
  REQUIRE(p.get("a") == m);
  REQUIRE(p.get("b").isZero());
  REQUIRE(p.size() == 10);
  REQUIRE_THROWS_AS(p.add("a", 1, 1), Error);
  REQUIRE_THROWS_AS(p.get("missing"), Error);
  REQUIRE_THROWS_AS(p.set("b", m), Error);  // shape mismatch
}

TEST_CASE("segment ranges are disjoint and cover the vector", "[params]") {
  ParamVector p;
  p.add("x", 3, 2);
  p.add("y", 1, 5);
  p.add("z", 2, 2);
  int covered = 0;
  int prev_end = 0;
  for (const Segment& s : p.segments()) {
    REQUIRE(s.offset == prev_end);
    prev_end = s.offset + s.size();
    covered += s.size();
  }
  REQUIRE(covered == p.size());
}

TEST_CASE("zero gradients leave parameters unchanged", "[optim]") {
  ParamVector p;
  p.add("w", 3, 1);
  p.set("w", (Matrix(3, 1) << 1.0, -2.0, 0.5).finished());
  AdamState st = AdamState::init(p);
  auto [p2, st2] = adam_step(p, p.zeros_like(), st);
  REQUIRE(p2.values == p.values);
  REQUIRE(st2.step == 1);
  REQUIRE(st2.m.isZero());
  REQUIRE(st2.v.isZero());
}

TEST_CASE("first Adam step moves by about +lr in the gradient sign", "[optim]") {
  ParamVector p;
  p.add("w", 1, 1);
  GradVector g = p.zeros_like();
  g.set_scalar("w", 2.0);
  AdamState st = AdamState::init(p, {0.1, 0.9, 0.999, 1e-8});
  auto [p2, st2] = adam_step(p, g, st);
  // bias correction makes m_hat = g, v_hat = g^2 -> update = lr * sign(g)
  REQUIRE(p2.get_scalar("w") == Catch::Approx(0.1).margin(1e-8));
}

TEST_CASE("second identical step is smaller than the first", "[optim]") {
  ParamVector p;
  p.add("w", 1, 1);
  GradVector g = p.zeros_like();
  g.set_scalar("w", 2.0);
  AdamState st = AdamState::init(p, {0.1, 0.9, 0.999, 1e-8});
  auto [p1, st1] = adam_step(p, g, st);
  auto [p2, st2] = adam_step(p1, g, st1);
  double step1 = p1.get_scalar("w");
  double step2 = p2.get_scalar("w") - p1.get_scalar("w");
  REQUIRE(step2 < step1);
  REQUIRE(step2 > 0.0);
}

TEST_CASE("adam_step is deterministic", "[optim]") {
  Rng rng(3);
  ParamVector p;
  p.add("w", 5, 2);
  p.set("w", rng.normal_matrix(5, 2));
  GradVector g = p.zeros_like();
  g.set("w", rng.normal_matrix(5, 2));
  AdamState st = AdamState::init(p);
  auto [a1, s1] = adam_step(p, g, st);
  auto [a2, s2] = adam_step(p, g, st);
  REQUIRE(a1.values == a2.values);
  REQUIRE(s1.m == s2.m);
  REQUIRE(s1.v == s2.v);
}

TEST_CASE("gradient clipping scales only above the threshold", "[optim]") {
  ParamVector g0;
  g0.add("w", 2, 1);
  g0.set("w", (Matrix(2, 1) << 0.1, 0.1).finished());
  REQUIRE(clip_gradients(g0, 1.0).values == g0.values);

  g0.set("w", (Matrix(2, 1) << 3.0, 4.0).finished());
  GradVector c = clip_gradients(g0, 1.0);
  REQUIRE(c.get("w")(0, 0) == Catch::Approx(0.6).margin(1e-12));
  REQUIRE(c.get("w")(1, 0) == Catch::Approx(0.8).margin(1e-12));
  REQUIRE(c.values.norm() <= 1.0 + 1e-12);
  // direction preserved
  REQUIRE(c.values.dot(g0.values) / (c.values.norm() * g0.values.norm()) ==
          Catch::Approx(1.0).margin(1e-12));

  g0.set("w", Matrix::Zero(2, 1));
  REQUIRE(clip_gradients(g0, 1.0).values.isZero());
  REQUIRE_THROWS_AS(clip_gradients(g0, 0.0), Error);
}

TEST_CASE("finite_diff_check on smooth and kinked objectives", "[optim]") {
  ParamVector p;
  p.add("t", 1, 1);
  p.set_scalar("t", 2.0);
  auto cube = [](Tape& t, const ParamVars& v) {
    return cmul(cmul(v["t"], v["t"]), v["t"]);
  };
  FiniteDiffReport rep = finite_diff_check(cube, p, 1e-5, 1e-4);
  REQUIRE(rep.pass);

  // |t| just next to the kink: the central difference straddles zero
  // and disagrees with the one-sided analytic slope
  p.set_scalar("t", 5e-6);
  auto absf = [](Tape& t, const ParamVars& v) {
    return sqrt_(add_const(cmul(v["t"], v["t"]), 1e-300));
  };
  FiniteDiffReport rep2 = finite_diff_check(absf, p, 1e-5, 1e-4);
  REQUIRE_FALSE(rep2.pass);
}

TEST_CASE("one-step LSTM loss matches finite differences", "[optim]") {
  Rng rng(17);
  RnnConfig cfg{2, 3, CellKind::LSTM};
  ParamVector p;
  add_rnn_segments(p, "rnn", cfg, 2);
  init_rnn_params(p, "rnn", cfg, 2, rng);
  Matrix x = rng.normal_matrix(2, 1);
  auto f = [&](Tape& t, const ParamVars& v) {
    RnnVarState st = rnn_zero_state(t, cfg);
    RnnVarState out = rnn_step_tape(t, v, "rnn", cfg, t.constant(x), st);
    return sum(cmul(out.h, out.h));
  };
  FiniteDiffReport rep = finite_diff_check(f, p, 1e-5, 1e-6);
  REQUIRE(rep.pass);
}
