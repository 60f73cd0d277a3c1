#ifndef CTPP_TAPE_HPP
#define CTPP_TAPE_HPP

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "ctpp/common.hpp"

namespace ctpp::ad {

using Mat = Eigen::MatrixXd;

class Tape;

// Lightweight handle into a tape. Values are computed eagerly at op creation;
// gradients materialize during backward().
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

// Append-only computation record. Creation order is a topological order, so
// backward() is a single reverse sweep. Nodes whose inputs carry no gradient
// are recorded value-only.
class Tape {
 public:
  Var leaf(const Mat& value) { return push(value, true, {}); }
  Var constant(Mat value) { return push(std::move(value), false, {}); }
  Var constant_scalar(double v) {
    Mat m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  const Mat& value(Var v) const { return nodes_[v.id].value; }
  double scalar(Var v) const { return nodes_[v.id].value(0, 0); }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  // Gradient of the last backward() output w.r.t. v; zero if v was untouched.
  Mat grad(Var v) const {
    const Node& n = nodes_[v.id];
    if (!n.grad_ready) return Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  // Accumulates d(output)/d(node) for every reachable node; output must be 1x1.
  void backward(Var output) {
    const Node& top = nodes_[output.id];
    if (top.value.rows() != 1 || top.value.cols() != 1) {
      throw NumericError("backward: output must be a scalar");
    }
    accumulate(output.id, Mat::Ones(1, 1));
    for (int i = output.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.grad_ready && n.pull) n.pull();
    }
  }

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  // --- construction interface used by the op free functions ---

  int next_id() const { return static_cast<int>(nodes_.size()); }

  Var push(Mat value, bool needs_grad, std::function<void()> pull) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = needs_grad;
    n.pull = std::move(pull);
    nodes_.push_back(std::move(n));
    Var v;
    v.tape = this;
    v.id = static_cast<int>(nodes_.size()) - 1;
    return v;
  }

  void accumulate(int id, const Mat& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (!n.grad_ready) {
      n.grad = g;
      n.grad_ready = true;
    } else {
      n.grad += g;
    }
  }

  const Mat& val(int id) const { return nodes_[id].value; }
  const Mat& grd(int id) const { return nodes_[id].grad; }

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void()> pull;
    bool requires_grad = false;
    bool grad_ready = false;
  };
  std::vector<Node> nodes_;
};

namespace detail {

inline void check_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw NumericError(std::string(op) + ": shape mismatch (" +
                       std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                       " vs " + std::to_string(b.rows()) + "x" +
                       std::to_string(b.cols()) + ")");
  }
}

inline double stable_softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

inline Var add(Var a, Var b) {
  Tape& t = *a.tape;
  detail::check_same_shape(t.value(a), t.value(b), "add");
  bool req = t.requires_grad(a) || t.requires_grad(b);
  int ia = a.id, ib = b.id, io = t.next_id();
  Tape* tp = &t;
  std::function<void()> pull;
  if (req) {
    pull = [tp, ia, ib, io] {
      tp->accumulate(ia, tp->grd(io));
      tp->accumulate(ib, tp->grd(io));
    };
  }
  return t.push(t.value(a) + t.value(b), req, std::move(pull));
}

inline Var sub(Var a, Var b) {
  Tape& t = *a.tape;
  detail::check_same_shape(t.value(a), t.value(b), "sub");
  bool req = t.requires_grad(a) || t.requires_grad(b);
  int ia = a.id, ib = b.id, io = t.next_id();
  Tape* tp = &t;
  std::function<void()> pull;
  if (req) {
    pull = [tp, ia, ib, io] {
      tp->accumulate(ia, tp->grd(io));
      tp->accumulate(ib, -tp->grd(io));
    };
  }
  return t.push(t.value(a) - t.value(b), req, std::move(pull));
}

inline Var scale(Var a, double c) {
  Tape& t = *a.tape;
  bool req = t.requires_grad(a);
  int ia = a.id, io = t.next_id();
  Tape* tp = &t;
  std::function<void()> pull;
  if (req) {
    pull = [tp, ia, io, c] { tp->accumulate(ia, c * tp->grd(io)); };
  }
  return t.push(c * t.value(a), req, std::move(pull));
}

inline Var neg(Var a) { return scale(a, -1.0); }

inline Var mul(Var a, Var b) {
  Tape& t = *a.tape;
  detail::check_same_shape(t.value(a), t.value(b), "mul");
  bool req = t.requires_grad(a) || t.requires_grad(b);
  int ia = a.id, ib = b.id, io = t.next_id();
  Tape* tp = &t;
  std::function<void()> pull;
  if (req) {
    pull = [tp, ia, ib, io] {
      tp->accumulate(ia, tp->grd(io).cwiseProduct(tp->val(ib)));
      tp->accumulate(ib, tp->grd(io).cwiseProduct(tp->val(ia)));
    };
  }
  return t.push(t.value(a).cwiseProduct(t.value(b)), req, std::move(pull));
}

inline Var div(Var a, Var b) {
  Tape& t = *a.tape;
  detail::check_same_shape(t.value(a), t.value(b), "div");
  bool req = t.requires_grad(a) || t.requires_grad(b);
  int ia = a.id, ib = b.id, io = t.next_id();
  Tape* tp = &t;
  std::function<void()> pull;
  if (req) {
    pull = [tp, ia, ib, io] {
      const Mat& g = tp->grd(io);
      tp->accumulate(ia, g.cwiseQuotient(tp->val(ib)));
      tp->accumulate(
          ib, -g.cwiseProduct(tp->val(io)).cwiseQuotient(tp->val(ib)));
    };
  }
  return t.push(t.value(a).cwiseQuotient(t.value(b)), req, std::move(pull));
}

inline Var matmul(Var a, Var b) {
  Tape& t = *a.tape;
  if (t.value(a).cols() != t.value(b).rows()) {
    throw NumericError("matmul: inner dimensions disagree (" +
                       std::to_string(t.value(a).cols()) + " vs " +
                       std::to_string(t.value(b).rows()) + ")");
  }
  bool req = t.requires_grad(a) || t.requires_grad(b);
  int ia = a.id, ib = b.id, io = t.next_id();
  Tape* tp = &t;
  std::function<void()> pull;
  if (req) {
    pull = [tp, ia, ib, io] {
      const Mat& g = tp->grd(io);
      tp->accumulate(ia, g * tp->val(ib).transpose());
      tp->accumulate(ib, tp->val(ia).transpose() * g);
    };
  }
  return t.push(t.value(a) * t.value(b), req, std::move(pull));
}

inline Var transpose(Var a) {
  Tape& t = *a.tape;
  bool req = t.requires_grad(a);
  int ia = a.id, io = t.next_id();
  Tape* tp = &t;
  std::function<void()> pull;
  if (req) {
    pull = [tp, ia, io] { tp->accumulate(ia, tp->grd(io).transpose()); };
  }
  return t.push(t.value(a).transpose(), req, std::move(pull));
}

// Inner product of two equal-shape matrices flattened, as a 1x1 var.
inline Var dot(Var a, Var b) {
  Tape& t = *a.tape;
  detail::check_same_shape(t.value(a), t.value(b), "dot");
  bool req = t.requires_grad(a) || t.requires_grad(b);
  int ia = a.id, ib = b.id, io = t.next_id();
  Tape* tp = &t;
  std::function<void()> pull;
  if (req) {
    pull = [tp, ia, ib, io] {
      double g = tp->grd(io)(0, 0);
      tp->accumulate(ia, g * tp->val(ib));
      tp->accumulate(ib, g * tp->val(ia));
    };
  }
  Mat v(1, 1);
  v(0, 0) = t.value(a).cwiseProduct(t.value(b)).sum();
  return t.push(std::move(v), req, std::move(pull));
}

inline Var sum_all(Var a) {
  Tape& t = *a.tape;
  bool req = t.requires_grad(a);
  int ia = a.id, io = t.next_id();
  Tape* tp = &t;
  std::function<void()> pull;
  if (req) {
    pull = [tp, ia, io] {
      const Mat& in = tp->val(ia);
      tp->accumulate(ia,
                     Mat::Constant(in.rows(), in.cols(), tp->grd(io)(0, 0)));
    };
  }
  Mat v(1, 1);
  v(0, 0) = t.value(a).sum();
  return t.push(std::move(v), req, std::move(pull));
}

inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw NumericError("concat_rows: no inputs");
  Tape& t = *parts.front().tape;
  Eigen::Index cols = t.value(parts.front()).cols();
  Eigen::Index rows = 0;
  bool req = false;
  for (Var p : parts) {
    if (t.value(p).cols() != cols) {
      throw NumericError("concat_rows: column counts disagree");
    }
    rows += t.value(p).rows();
    req = req || t.requires_grad(p);
  }
  Mat v(rows, cols);
  Eigen::Index r = 0;
  std::vector<int> ids;
  ids.reserve(parts.size());
  for (Var p : parts) {
    v.middleRows(r, t.value(p).rows()) = t.value(p);
    r += t.value(p).rows();
    ids.push_back(p.id);
  }
  int io = t.next_id();
  Tape* tp = &t;
  std::function<void()> pull;
  if (req) {
    pull = [tp, ids, io] {
      const Mat& g = tp->grd(io);
      Eigen::Index r0 = 0;
      for (int id : ids) {
        Eigen::Index n = tp->val(id).rows();
        tp->accumulate(id, g.middleRows(r0, n));
        r0 += n;
      }
    };
  }
  return t.push(std::move(v), req, std::move(pull));
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw NumericError("concat_cols: no inputs");
  Tape& t = *parts.front().tape;
  Eigen::Index rows = t.value(parts.front()).rows();
  Eigen::Index cols = 0;
  bool req = false;
  for (Var p : parts) {
    if (t.value(p).rows() != rows) {
      throw NumericError("concat_cols: row counts disagree");
    }
    cols += t.value(p).cols();
    req = req || t.requires_grad(p);
  }
  Mat v(rows, cols);
  Eigen::Index c = 0;
  std::vector<int> ids;
  ids.reserve(parts.size());
  for (Var p : parts) {
    v.middleCols(c, t.value(p).cols()) = t.value(p);
    c += t.value(p).cols();
    ids.push_back(p.id);
  }
  int io = t.next_id();
  Tape* tp = &t;
  std::function<void()> pull;
  if (req) {
    pull = [tp, ids, io] {
      const Mat& g = tp->grd(io);
      Eigen::Index c0 = 0;
      for (int id : ids) {
        Eigen::Index n = tp->val(id).cols();
        tp->accumulate(id, g.middleCols(c0, n));
        c0 += n;
      }
    };
  }
  return t.push(std::move(v), req, std::move(pull));
}

inline Var slice_rows(Var a, Eigen::Index r0, Eigen::Index n) {
  Tape& t = *a.tape;
  const Mat& av = t.value(a);
  if (r0 < 0 || n < 0 || r0 + n > av.rows()) {
    throw NumericError("slice_rows: range out of bounds");
  }
  bool req = t.requires_grad(a);
  int ia = a.id, io = t.next_id();
  Tape* tp = &t;
  std::function<void()> pull;
  if (req) {
    pull = [tp, ia, io, r0, n] {
      const Mat& in = tp->val(ia);
      Mat g = Mat::Zero(in.rows(), in.cols());
      g.middleRows(r0, n) = tp->grd(io);
      tp->accumulate(ia, g);
    };
  }
  return t.push(av.middleRows(r0, n), req, std::move(pull));
}

inline Var slice_cols(Var a, Eigen::Index c0, Eigen::Index n) {
  Tape& t = *a.tape;
  const Mat& av = t.value(a);
  if (c0 < 0 || n < 0 || c0 + n > av.cols()) {
    throw NumericError("slice_cols: range out of bounds");
  }
  bool req = t.requires_grad(a);
  int ia = a.id, io = t.next_id();
  Tape* tp = &t;
  std::function<void()> pull;
  if (req) {
    pull = [tp, ia, io, c0, n] {
      const Mat& in = tp->val(ia);
      Mat g = Mat::Zero(in.rows(), in.cols());
      g.middleCols(c0, n) = tp->grd(io);
      tp->accumulate(ia, g);
    };
  }
  return t.push(av.middleCols(c0, n), req, std::move(pull));
}

// Adds a 1xC row vector to every row of an RxC matrix.
inline Var add_row_broadcast(Var a, Var row) {
  Tape& t = *a.tape;
  const Mat& av = t.value(a);
  const Mat& rv = t.value(row);
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw NumericError("add_row_broadcast: row must be 1x" +
                       std::to_string(av.cols()));
  }
  bool req = t.requires_grad(a) || t.requires_grad(row);
  int ia = a.id, ir = row.id, io = t.next_id();
  Tape* tp = &t;
  std::function<void()> pull;
  if (req) {
    pull = [tp, ia, ir, io] {
      const Mat& g = tp->grd(io);
      tp->accumulate(ia, g);
      tp->accumulate(ir, g.colwise().sum());
    };
  }
  Mat v = av;
  v.rowwise() += rv.row(0);
  return t.push(std::move(v), req, std::move(pull));
}

// Multiplies every row of an RxC matrix elementwise by a 1xC row vector.
inline Var mul_row_broadcast(Var a, Var row) {
  Tape& t = *a.tape;
  const Mat& av = t.value(a);
  const Mat& rv = t.value(row);
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw NumericError("mul_row_broadcast: row must be 1x" +
                       std::to_string(av.cols()));
  }
  bool req = t.requires_grad(a) || t.requires_grad(row);
  int ia = a.id, ir = row.id, io = t.next_id();
  Tape* tp = &t;
  std::function<void()> pull;
  if (req) {
    pull = [tp, ia, ir, io] {
      const Mat& g = tp->grd(io);
      Mat ga = g.array().rowwise() * tp->val(ir).row(0).array();
      tp->accumulate(ia, ga);
      Mat gr = g.cwiseProduct(tp->val(ia)).colwise().sum();
      tp->accumulate(ir, gr);
    };
  }
  Mat v = av.array().rowwise() * rv.row(0).array();
  return t.push(std::move(v), req, std::move(pull));
}

// Row-wise softmax with max-shift stabilization.
inline Var softmax_rows(Var a) {
  Tape& t = *a.tape;
  const Mat& av = t.value(a);
  Mat v(av.rows(), av.cols());
  for (Eigen::Index r = 0; r < av.rows(); ++r) {
    double m = av.row(r).maxCoeff();
    Eigen::ArrayXd ex = (av.row(r).array() - m).exp();
    v.row(r) = (ex / ex.sum()).matrix();
  }
  bool req = t.requires_grad(a);
  int ia = a.id, io = t.next_id();
  Tape* tp = &t;
  std::function<void()> pull;
  if (req) {
    pull = [tp, ia, io] {
      const Mat& g = tp->grd(io);
      const Mat& y = tp->val(io);
      Mat ga(g.rows(), g.cols());
      for (Eigen::Index r = 0; r < g.rows(); ++r) {
        double s = g.row(r).cwiseProduct(y.row(r)).sum();
        ga.row(r) = y.row(r).cwiseProduct(g.row(r).array().matrix() -
                                          Mat::Constant(1, g.cols(), s));
      }
      tp->accumulate(ia, ga);
    };
  }
  return t.push(std::move(v), req, std::move(pull));
}

// Row-wise standardization (zero mean, unit variance, population variance,
// epsilon inside the square root). Affine transforms are applied separately
// via the broadcast ops.
inline Var layer_norm_rows(Var a, double eps = 1e-5) {
  Tape& t = *a.tape;
  const Mat& av = t.value(a);
  Eigen::Index cols = av.cols();
  Mat v(av.rows(), cols);
  Mat inv_sigma(av.rows(), 1);
  for (Eigen::Index r = 0; r < av.rows(); ++r) {
    double mu = av.row(r).mean();
    Eigen::RowVectorXd c = av.row(r).array() - mu;
    double var = c.squaredNorm() / static_cast<double>(cols);
    double is = 1.0 / std::sqrt(var + eps);
    inv_sigma(r, 0) = is;
    v.row(r) = c * is;
  }
  bool req = t.requires_grad(a);
  int ia = a.id, io = t.next_id();
  Tape* tp = &t;
  std::function<void()> pull;
  if (req) {
    pull = [tp, ia, io, inv_sigma, cols] {
      const Mat& g = tp->grd(io);
      const Mat& y = tp->val(io);
      Mat ga(g.rows(), g.cols());
      double inv_n = 1.0 / static_cast<double>(cols);
      for (Eigen::Index r = 0; r < g.rows(); ++r) {
        double gmean = g.row(r).mean();
        double gymean = g.row(r).cwiseProduct(y.row(r)).sum() * inv_n;
        ga.row(r) = inv_sigma(r, 0) *
                    (g.row(r).array() - gmean - y.row(r).array() * gymean);
      }
      tp->accumulate(ia, ga);
    };
  }
  return t.push(std::move(v), req, std::move(pull));
}

inline Var vtanh(Var a) {
  Tape& t = *a.tape;
  Mat v = t.value(a).array().tanh();
  bool req = t.requires_grad(a);
  int ia = a.id, io = t.next_id();
  Tape* tp = &t;
  std::function<void()> pull;
  if (req) {
    pull = [tp, ia, io] {
      const Mat& y = tp->val(io);
      Mat ga = tp->grd(io).array() * (1.0 - y.array().square());
      tp->accumulate(ia, ga);
    };
  }
  return t.push(std::move(v), req, std::move(pull));
}

inline Var vexp(Var a) {
  Tape& t = *a.tape;
  Mat v = t.value(a).array().exp();
  bool req = t.requires_grad(a);
  int ia = a.id, io = t.next_id();
  Tape* tp = &t;
  std::function<void()> pull;
  if (req) {
    pull = [tp, ia, io] {
      Mat ga = tp->grd(io).cwiseProduct(tp->val(io));
      tp->accumulate(ia, ga);
    };
  }
  return t.push(std::move(v), req, std::move(pull));
}

// Natural log; inputs must be strictly positive.
inline Var vlog(Var a) {
  Tape& t = *a.tape;
  Mat v = t.value(a).array().log();
  bool req = t.requires_grad(a);
  int ia = a.id, io = t.next_id();
  Tape* tp = &t;
  std::function<void()> pull;
  if (req) {
    pull = [tp, ia, io] {
      Mat ga = tp->grd(io).cwiseQuotient(tp->val(ia));
      tp->accumulate(ia, ga);
    };
  }
  return t.push(std::move(v), req, std::move(pull));
}

inline Var vsqrt(Var a) {
  Tape& t = *a.tape;
  Mat v = t.value(a).array().sqrt();
  bool req = t.requires_grad(a);
  int ia = a.id, io = t.next_id();
  Tape* tp = &t;
  std::function<void()> pull;
  if (req) {
    pull = [tp, ia, io] {
      Mat ga = tp->grd(io).array() / (2.0 * tp->val(io).array());
      tp->accumulate(ia, ga);
    };
  }
  return t.push(std::move(v), req, std::move(pull));
}

inline Var sigmoid(Var a) {
  Tape& t = *a.tape;
  Mat v = t.value(a).unaryExpr([](double x) { return detail::stable_sigmoid(x); });
  bool req = t.requires_grad(a);
  int ia = a.id, io = t.next_id();
  Tape* tp = &t;
  std::function<void()> pull;
  if (req) {
    pull = [tp, ia, io] {
      const Mat& y = tp->val(io);
      Mat ga = tp->grd(io).cwiseProduct(
          y.cwiseProduct(Mat::Ones(y.rows(), y.cols()) - y));
      tp->accumulate(ia, ga);
    };
  }
  return t.push(std::move(v), req, std::move(pull));
}

inline Var softplus(Var a) {
  Tape& t = *a.tape;
  Mat v = t.value(a).unaryExpr([](double x) { return detail::stable_softplus(x); });
  bool req = t.requires_grad(a);
  int ia = a.id, io = t.next_id();
  Tape* tp = &t;
  std::function<void()> pull;
  if (req) {
    pull = [tp, ia, io] {
      Mat sig = tp->val(ia).unaryExpr(
          [](double x) { return detail::stable_sigmoid(x); });
      tp->accumulate(ia, tp->grd(io).cwiseProduct(sig));
    };
  }
  return t.push(std::move(v), req, std::move(pull));
}

}  // namespace ctpp::ad

#endif  // CTPP_TAPE_HPP
