// Adam (ascent convention: parameters move along +gradient), global-norm
// gradient clipping, and central finite-difference verification.
#pragma once

#include "gprnn/params.hpp"

namespace gprnn {

struct AdamHyper {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Vector m;  // first moment
  Vector v;  // second moment, element-wise >= 0
  long step = 0;
  AdamHyper hyper;

  static AdamState init(const ParamVector& params, AdamHyper hyper = {}) {
    AdamState s;
    s.m = Vector::Zero(params.size());
    s.v = Vector::Zero(params.size());
    s.hyper = hyper;
    return s;
  }
};

// Standard bias-corrected Adam update. Deterministic; returns updated
// copies of both the parameters and the state.
inline std::pair<ParamVector, AdamState> adam_step(const ParamVector& params,
                                                   const GradVector& grads,
                                                   const AdamState& state) {
  if (!params.same_layout(grads))
    throw Error("adam_step: parameter/gradient layout mismatch");
  if (state.m.size() != params.size())
    throw Error("adam_step: state size mismatch");
  AdamState s = state;
  s.step += 1;
  const AdamHyper& h = s.hyper;
  s.m = h.beta1 * s.m + (1.0 - h.beta1) * grads.values;
  s.v = h.beta2 * s.v.array() +
        (1.0 - h.beta2) * grads.values.array().square();
  double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(s.step));
  double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(s.step));
  ParamVector out = params;
  out.values.array() += h.lr * (s.m.array() / bc1) /
                        ((s.v.array() / bc2).sqrt() + h.eps);
  return {out, s};
}

inline GradVector clip_gradients(const GradVector& grads, double max_norm) {
  if (max_norm <= 0) throw Error("clip_gradients: max_norm must be > 0");
  double norm = grads.values.norm();
  if (norm <= max_norm) return grads;
  GradVector out = grads;
  out.values *= max_norm / norm;
  return out;
}

struct FiniteDiffReport {
  double max_relative_error = 0.0;
  bool pass = false;
  int worst_index = -1;
};

// Central differences, coordinate-wise. Relative error uses a
// max(|a|,|b|,1) denominator.
inline FiniteDiffReport finite_diff_check(const Objective& f,
                                          const ParamVector& point,
                                          double step, double tol) {
  if (step <= 0 || tol <= 0)
    throw Error("finite_diff_check: step and tol must be > 0");
  GradVector g = grad(f, point);
  FiniteDiffReport rep;
  ParamVector p = point;
  for (int i = 0; i < point.size(); ++i) {
    double orig = p.values[i];
    p.values[i] = orig + step;
    double fp = eval_objective(f, p);
    p.values[i] = orig - step;
    double fm = eval_objective(f, p);
    p.values[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw Error("finite_diff_check: objective non-finite at perturbed "
                  "point, coordinate " + std::to_string(i));
    double fd = (fp - fm) / (2.0 * step);
    double a = g.values[i], b = fd;
    double rel = std::abs(a - b) /
                 std::max({std::abs(a), std::abs(b), 1.0});
    if (rel > rep.max_relative_error) {
      rep.max_relative_error = rel;
      rep.worst_index = i;
    }
  }
  rep.pass = rep.max_relative_error < tol;
  return rep;
}

}  // namespace gprnn
