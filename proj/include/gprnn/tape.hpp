// Reverse-mode differentiation over a dynamically built tape of matrix
// nodes. Scalars are 1x1 matrices. A Tape instance is single-threaded;
// independent runs each own their tape.
#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "gprnn/core.hpp"

namespace gprnn {

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

struct TapeNode {
  Matrix value;
  Matrix adj;  // allocated lazily during backward
  std::function<void(Tape&, const Matrix&)> back;  // nullptr for leaves
  const char* op = "leaf";
};

class Tape {
 public:
  Var push(Matrix value, const char* op,
           std::function<void(Tape&, const Matrix&)> back = nullptr) {
    nodes_.push_back(TapeNode{std::move(value), Matrix(), std::move(back), op});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  Var leaf(const Matrix& value, const char* name = "leaf") {
    return push(value, name);
  }
  Var constant(const Matrix& value) { return push(value, "const"); }
  Var constant(double value) { return push(scalar(value), "const"); }

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  double scalar_value(Var v) const { return nodes_[v.id].value(0, 0); }

  // Adjoint of `v` after backward(). Zero matrix if the node was never
  // reached.
  Matrix adjoint(Var v) const {
    const TapeNode& n = nodes_[v.id];
    if (n.adj.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
    return n.adj;
  }

  void accumulate(int id, const Matrix& grad) {
    TapeNode& n = nodes_[id];
    if (n.adj.size() == 0)
      n.adj = grad;
    else
      n.adj += grad;
  }

  // Reverse sweep from a scalar root. Throws on a non-finite root,
  // naming the first non-finite node in the graph.
  void backward(Var root) {
    if (nodes_[root.id].value.size() != 1)
      throw Error("tape backward: root is not a scalar");
    if (!std::isfinite(nodes_[root.id].value(0, 0)))
      throw Error("tape: non-finite value at node '" +
                  first_nonfinite_op() + "'");
    for (auto& n : nodes_) n.adj.resize(0, 0);
    nodes_[root.id].adj = scalar(1.0);
    for (int i = root.id; i >= 0; --i) {
      TapeNode& n = nodes_[i];
      if (n.adj.size() == 0 || !n.back) continue;
      n.back(*this, n.adj);
    }
  }

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }
  void reserve(std::size_t n) { nodes_.reserve(n); }

  std::string first_nonfinite_op() const {
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (!nodes_[i].value.allFinite())
        return std::string(nodes_[i].op) + "#" + std::to_string(i);
    return "<root>";
  }

  static Matrix scalar(double v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return m;
  }

 private:
  std::vector<TapeNode> nodes_;
};

// ---------------------------------------------------------------------------
// Primitives. Each returns a new node on the same tape as its inputs.

inline Var add(Var a, Var b) {
  Tape& t = *a.tape;
  int ia = a.id, ib = b.id;
  return t.push(t.value(a) + t.value(b), "add",
                [ia, ib](Tape& tp, const Matrix& g) {
                  tp.accumulate(ia, g);
                  tp.accumulate(ib, g);
                });
}

inline Var sub(Var a, Var b) {
  Tape& t = *a.tape;
  int ia = a.id, ib = b.id;
  return t.push(t.value(a) - t.value(b), "sub",
                [ia, ib](Tape& tp, const Matrix& g) {
                  tp.accumulate(ia, g);
                  tp.accumulate(ib, -g);
                });
}

inline Var neg(Var a) {
  Tape& t = *a.tape;
  int ia = a.id;
  return t.push(-t.value(a), "neg",
                [ia](Tape& tp, const Matrix& g) { tp.accumulate(ia, -g); });
}

// Element-wise product.
inline Var cmul(Var a, Var b) {
  Tape& t = *a.tape;
  int ia = a.id, ib = b.id;
  return t.push(t.value(a).cwiseProduct(t.value(b)), "cmul",
                [ia, ib](Tape& tp, const Matrix& g) {
                  tp.accumulate(ia, g.cwiseProduct(tp.value({&tp, ib})));
                  tp.accumulate(ib, g.cwiseProduct(tp.value({&tp, ia})));
                });
}

// Element-wise quotient a ./ b.
inline Var cdiv(Var a, Var b) {
  Tape& t = *a.tape;
  int ia = a.id, ib = b.id;
  return t.push(t.value(a).cwiseQuotient(t.value(b)), "cdiv",
                [ia, ib](Tape& tp, const Matrix& g) {
                  const Matrix& bv = tp.value({&tp, ib});
                  const Matrix& av = tp.value({&tp, ia});
                  tp.accumulate(ia, g.cwiseQuotient(bv));
                  tp.accumulate(ib, -g.cwiseProduct(av).cwiseQuotient(
                                        bv.cwiseProduct(bv)));
                });
}

inline Var matmul(Var a, Var b) {
  Tape& t = *a.tape;
  int ia = a.id, ib = b.id;
  return t.push(t.value(a) * t.value(b), "matmul",
                [ia, ib](Tape& tp, const Matrix& g) {
                  tp.accumulate(ia, g * tp.value({&tp, ib}).transpose());
                  tp.accumulate(ib, tp.value({&tp, ia}).transpose() * g);
                });
}

inline Var transpose(Var a) {
  Tape& t = *a.tape;
  int ia = a.id;
  return t.push(t.value(a).transpose(), "transpose",
                [ia](Tape& tp, const Matrix& g) {
                  tp.accumulate(ia, g.transpose());
                });
}

inline Var scale(Var a, double c) {
  Tape& t = *a.tape;
  int ia = a.id;
  return t.push(t.value(a) * c, "scale",
                [ia, c](Tape& tp, const Matrix& g) {
                  tp.accumulate(ia, g * c);
                });
}

inline Var add_const(Var a, double c) {
  Tape& t = *a.tape;
  int ia = a.id;
  return t.push(t.value(a).array() + c, "add_const",
                [ia](Tape& tp, const Matrix& g) { tp.accumulate(ia, g); });
}

// Scalar (1x1) node times matrix node.
inline Var smul(Var s, Var m) {
  Tape& t = *s.tape;
  int is = s.id, im = m.id;
  return t.push(t.scalar_value(s) * t.value(m), "smul",
                [is, im](Tape& tp, const Matrix& g) {
                  const Matrix& mv = tp.value({&tp, im});
                  tp.accumulate(is,
                                Tape::scalar(g.cwiseProduct(mv).sum()));
                  tp.accumulate(im, tp.value({&tp, is})(0, 0) * g);
                });
}

namespace detail {
template <class F, class DF>
inline Var unary(Var a, const char* op, F f, DF df) {
  Tape& t = *a.tape;
  int ia = a.id;
  Matrix out = t.value(a).unaryExpr(f);
  Matrix deriv = t.value(a).unaryExpr(df);
  return t.push(std::move(out), op,
                [ia, deriv](Tape& tp, const Matrix& g) {
                  tp.accumulate(ia, g.cwiseProduct(deriv));
                });
}
}  // namespace detail

inline Var tanh_(Var a) {
  return detail::unary(a, "tanh",
                       [](double x) { return std::tanh(x); },
                       [](double x) {
                         double th = std::tanh(x);
                         return 1.0 - th * th;
                       });
}

inline Var sigmoid_(Var a) {
  return detail::unary(a, "sigmoid",
                       [](double x) { return sigmoid(x); },
                       [](double x) {
                         double s = sigmoid(x);
                         return s * (1.0 - s);
                       });
}

inline Var exp_(Var a) {
  return detail::unary(a, "exp",
                       [](double x) { return std::exp(x); },
                       [](double x) { return std::exp(x); });
}

inline Var log_(Var a) {
  return detail::unary(a, "log",
                       [](double x) { return std::log(x); },
                       [](double x) { return 1.0 / x; });
}

inline Var softplus_(Var a) {
  return detail::unary(a, "softplus",
                       [](double x) { return softplus(x); },
                       [](double x) { return sigmoid(x); });
}

inline Var square_(Var a) {
  return detail::unary(a, "square",
                       [](double x) { return x * x; },
                       [](double x) { return 2.0 * x; });
}

inline Var sqrt_(Var a) {
  return detail::unary(a, "sqrt",
                       [](double x) { return std::sqrt(x); },
                       [](double x) { return 0.5 / std::sqrt(x); });
}

// min(x, hi) with pass-through gradient below the cap. `hits`, when
// given, counts clamped entries (diagnostic, never silent overflow).
inline Var clamp_max(Var a, double hi, long* hits = nullptr) {
  Tape& t = *a.tape;
  int ia = a.id;
  const Matrix& av = t.value(a);
  Matrix mask = (av.array() <= hi).cast<double>();
  if (hits) *hits += static_cast<long>(av.size() - mask.sum());
  Matrix out = av.cwiseMin(hi);
  return t.push(std::move(out), "clamp_max",
                [ia, mask](Tape& tp, const Matrix& g) {
                  tp.accumulate(ia, g.cwiseProduct(mask));
                });
}

inline Var sum(Var a) {
  Tape& t = *a.tape;
  int ia = a.id;
  int r = static_cast<int>(t.value(a).rows()),
      c = static_cast<int>(t.value(a).cols());
  return t.push(Tape::scalar(t.value(a).sum()), "sum",
                [ia, r, c](Tape& tp, const Matrix& g) {
                  tp.accumulate(ia, Matrix::Constant(r, c, g(0, 0)));
                });
}

inline Var dot(Var a, Var b) { return sum(cmul(a, b)); }

inline Var rows(Var a, int r0, int n) {
  Tape& t = *a.tape;
  int ia = a.id;
  int R = static_cast<int>(t.value(a).rows()),
      C = static_cast<int>(t.value(a).cols());
  return t.push(t.value(a).middleRows(r0, n), "rows",
                [ia, r0, n, R, C](Tape& tp, const Matrix& g) {
                  Matrix full = Matrix::Zero(R, C);
                  full.middleRows(r0, n) = g;
                  tp.accumulate(ia, full);
                });
}

inline Var col(Var a, int j) {
  Tape& t = *a.tape;
  int ia = a.id;
  int R = static_cast<int>(t.value(a).rows()),
      C = static_cast<int>(t.value(a).cols());
  return t.push(t.value(a).col(j), "col",
                [ia, j, R, C](Tape& tp, const Matrix& g) {
                  Matrix full = Matrix::Zero(R, C);
                  full.col(j) = g;
                  tp.accumulate(ia, full);
                });
}

inline Var cols(Var a, int c0, int n) {
  Tape& t = *a.tape;
  int ia = a.id;
  int R = static_cast<int>(t.value(a).rows()),
      C = static_cast<int>(t.value(a).cols());
  return t.push(t.value(a).middleCols(c0, n), "cols",
                [ia, c0, n, R, C](Tape& tp, const Matrix& g) {
                  Matrix full = Matrix::Zero(R, C);
                  full.middleCols(c0, n) = g;
                  tp.accumulate(ia, full);
                });
}

inline Var hstack(const std::vector<Var>& cols) {
  Tape& t = *cols.front().tape;
  int R = static_cast<int>(t.value(cols.front()).rows());
  int C = 0;
  for (Var v : cols) C += static_cast<int>(t.value(v).cols());
  Matrix out(R, C);
  std::vector<int> ids, widths;
  int at = 0;
  for (Var v : cols) {
    int w = static_cast<int>(t.value(v).cols());
    out.middleCols(at, w) = t.value(v);
    ids.push_back(v.id);
    widths.push_back(w);
    at += w;
  }
  return t.push(std::move(out), "hstack",
                [ids, widths](Tape& tp, const Matrix& g) {
                  int at = 0;
                  for (std::size_t k = 0; k < ids.size(); ++k) {
                    tp.accumulate(ids[k], g.middleCols(at, widths[k]));
                    at += widths[k];
                  }
                });
}

// Broadcast-add a column vector to every column of a matrix.
inline Var add_colvec(Var m, Var v) {
  Tape& t = *m.tape;
  int im = m.id, iv = v.id;
  return t.push(t.value(m).colwise() +
                    Eigen::VectorXd(t.value(v).col(0)),
                "add_colvec",
                [im, iv](Tape& tp, const Matrix& g) {
                  tp.accumulate(im, g);
                  tp.accumulate(iv, g.rowwise().sum());
                });
}

// Pairwise squared distances between columns of Z (L x T) -> T x T.
inline Var sqdist(Var z) {
  Tape& t = *z.tape;
  int iz = z.id;
  const Matrix& Z = t.value(z);
  int T = static_cast<int>(Z.cols());
  Vector sq = Z.colwise().squaredNorm();
  Matrix D = sq.replicate(1, T) + sq.transpose().replicate(T, 1) -
             2.0 * Z.transpose() * Z;
  D = D.cwiseMax(0.0);
  return t.push(std::move(D), "sqdist",
                [iz](Tape& tp, const Matrix& g) {
                  const Matrix& Zv = tp.value({&tp, iz});
                  Matrix W = g + g.transpose();
                  Vector r = W.rowwise().sum();
                  // dZ(:,s) = 2 * sum_t W(s,t) (z_s - z_t)
                  Matrix dZ = 2.0 * (Zv * r.asDiagonal() - Zv * W);
                  tp.accumulate(iz, dZ);
                });
}

// Squared distances between columns of A (L x Ta) and constant columns
// of B (L x Tb) -> Ta x Tb. B carries no gradient.
inline Var sqdist_cross(Var a, const Matrix& B) {
  Tape& t = *a.tape;
  int ia = a.id;
  const Matrix& A = t.value(a);
  int Ta = static_cast<int>(A.cols()), Tb = static_cast<int>(B.cols());
  Vector sa = A.colwise().squaredNorm();
  Vector sb = B.colwise().squaredNorm();
  Matrix D = sa.replicate(1, Tb) + sb.transpose().replicate(Ta, 1) -
             2.0 * A.transpose() * B;
  D = D.cwiseMax(0.0);
  return t.push(std::move(D), "sqdist_cross",
                [ia, B](Tape& tp, const Matrix& g) {
                  const Matrix& Av = tp.value({&tp, ia});
                  // dA(:,s) = 2 * sum_t g(s,t) (a_s - b_t)
                  Vector r = g.rowwise().sum();
                  Matrix dA = 2.0 * (Av * r.asDiagonal() - B * g.transpose());
                  tp.accumulate(ia, dA);
                });
}

// Sum over columns x_i of X of log N(x_i; 0, C). One Cholesky per call;
// backward uses dC = 0.5 A A^T - (N/2) C^{-1}, dX = -A with A = C^{-1} X.
// Throws when C is not positive definite.
inline Var mvn_logpdf_sum(Var c, Var x) {
  Tape& t = *c.tape;
  int ic = c.id, ix = x.id;
  const Matrix& C = t.value(c);
  const Matrix& X = t.value(x);
  int T = static_cast<int>(C.rows());
  int N = static_cast<int>(X.cols());
  Eigen::LLT<Matrix> llt(C);
  if (llt.info() != Eigen::Success)
    throw Error("mvn_logpdf_sum: covariance not positive definite "
                "(Cholesky failed at T=" + std::to_string(T) + ")");
  double logdet = 0.0;
  for (int i = 0; i < T; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  Matrix A = llt.solve(X);
  double quad = (X.cwiseProduct(A)).sum();
  double val = -0.5 * quad - 0.5 * N * logdet - 0.5 * N * T * kLog2Pi;
  return t.push(Tape::scalar(val), "mvn_logpdf_sum",
                [ic, ix, llt, A, T, N](Tape& tp, const Matrix& g) {
                  double gs = g(0, 0);
                  Matrix Cinv = llt.solve(Matrix::Identity(T, T));
                  tp.accumulate(ic, gs * (0.5 * (A * A.transpose()) -
                                          0.5 * N * Cinv));
                  tp.accumulate(ix, -gs * A);
                });
}

// Convenience operators.
inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(Var a, Var b) { return matmul(a, b); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator*(Var a, double c) { return scale(a, c); }
inline Var operator+(Var a, double c) { return add_const(a, c); }
inline Var operator-(Var a, double c) { return add_const(a, -c); }

}  // namespace gprnn
