// Flat parameter vectors with named matrix segments, and their tape
// counterparts. A GradVector shares the layout of the ParamVector it
// differentiates.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "gprnn/core.hpp"
#include "gprnn/tape.hpp"

namespace gprnn {

struct Segment {
  std::string name;
  int offset = 0;
  int rows = 0;
  int cols = 0;
  int size() const { return rows * cols; }
};

class ParamVector {
 public:
  // Appends a named segment; returns its index.
  int add(const std::string& name, int rows, int cols) {
    if (index_.count(name))
      throw Error("ParamVector: duplicate segment '" + name + "'");
    Segment s{name, static_cast<int>(values.size()), rows, cols};
    index_[name] = static_cast<int>(segs_.size());
    segs_.push_back(s);
    values.conservativeResize(values.size() + s.size());
    values.tail(s.size()).setZero();
    return index_[name];
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  const Segment& segment(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end())
      throw Error("ParamVector: unknown segment '" + name + "'");
    return segs_[it->second];
  }

  const std::vector<Segment>& segments() const { return segs_; }

  Matrix get(const std::string& name) const {
    const Segment& s = segment(name);
    return Eigen::Map<const Matrix>(values.data() + s.offset, s.rows, s.cols);
  }

  void set(const std::string& name, const Matrix& m) {
    const Segment& s = segment(name);
    if (m.rows() != s.rows || m.cols() != s.cols)
      throw Error("ParamVector: shape mismatch writing segment '" + name +
                  "'");
    Eigen::Map<Matrix>(values.data() + s.offset, s.rows, s.cols) = m;
  }

  double get_scalar(const std::string& name) const {
    return get(name)(0, 0);
  }
  void set_scalar(const std::string& name, double v) {
    set(name, Tape::scalar(v));
  }

  bool same_layout(const ParamVector& other) const {
    if (segs_.size() != other.segs_.size()) return false;
    for (std::size_t i = 0; i < segs_.size(); ++i) {
      const Segment &a = segs_[i], &b = other.segs_[i];
      if (a.name != b.name || a.offset != b.offset || a.rows != b.rows ||
          a.cols != b.cols)
        return false;
    }
    return true;
  }

  // Same layout, zero values.
  ParamVector zeros_like() const {
    ParamVector p(*this);
    p.values.setZero();
    return p;
  }

  int size() const { return static_cast<int>(values.size()); }

  Vector values;

 private:
  std::vector<Segment> segs_;
  std::map<std::string, int> index_;
};

using GradVector = ParamVector;

// Tape leaves for every segment of a ParamVector; hands the model code
// named Vars and collects their adjoints back into a GradVector.
class ParamVars {
 public:
  ParamVars(Tape& tape, const ParamVector& params) : params_(&params) {
    for (const Segment& s : params.segments())
      vars_[s.name] = tape.leaf(params.get(s.name), "param");
  }

  Var operator[](const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end())
      throw Error("ParamVars: unknown segment '" + name + "'");
    return it->second;
  }
  bool has(const std::string& name) const { return vars_.count(name) > 0; }

  GradVector collect_grads(const Tape& tape) const {
    GradVector g = params_->zeros_like();
    for (const auto& [name, var] : vars_) g.set(name, tape.adjoint(var));
    return g;
  }

 private:
  const ParamVector* params_;
  std::map<std::string, Var> vars_;
};

// A differentiable scalar objective of a ParamVector.
using Objective = std::function<Var(Tape&, const ParamVars&)>;

inline double eval_objective(const Objective& f, const ParamVector& p) {
  Tape tape;
  ParamVars vars(tape, p);
  Var out = f(tape, vars);
  double v = tape.scalar_value(out);
  if (!std::isfinite(v))
    throw Error("objective: non-finite value at node '" +
                tape.first_nonfinite_op() + "'");
  return v;
}

// Exact reverse-mode gradient of `f` at `point`.
inline GradVector grad(const Objective& f, const ParamVector& point) {
  Tape tape;
  ParamVars vars(tape, point);
  Var out = f(tape, vars);
  tape.backward(out);
  return vars.collect_grads(tape);
}

inline std::pair<double, GradVector> value_and_grad(const Objective& f,
                                                    const ParamVector& point) {
  Tape tape;
  ParamVars vars(tape, point);
  Var out = f(tape, vars);
  tape.backward(out);
  return {tape.scalar_value(out), vars.collect_grads(tape)};
}

}  // namespace gprnn
