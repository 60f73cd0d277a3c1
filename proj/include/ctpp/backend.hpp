#ifndef CTPP_BACKEND_HPP
#define CTPP_BACKEND_HPP

#include <Eigen/Dense>
#include <unordered_map>
#include <vector>

#include "ctpp/params.hpp"
#include "ctpp/tape.hpp"

namespace ctpp {

// The model math is written once against this implicit interface and
// instantiated with either backend: EigenBackend evaluates values only (used
// by sampling and metric evaluation), TapeBackend records the same
// computation for reverse-mode gradients (used by training and grad checks).

class EigenBackend {
 public:
  using M = Mat;

  M param(Param& p) { return p.value; }
  M constant(Mat m) { return m; }
  M constant_scalar(double v) { return Mat::Constant(1, 1, v); }
  const Mat& value(const M& m) const { return m; }
  double scalar(const M& m) const { return m(0, 0); }

  M add(const M& a, const M& b) { return a + b; }
  M sub(const M& a, const M& b) { return a - b; }
  M scale(const M& a, double c) { return c * a; }
  M mul(const M& a, const M& b) { return a.cwiseProduct(b); }
  M div(const M& a, const M& b) { return a.cwiseQuotient(b); }
  M matmul(const M& a, const M& b) { return a * b; }
  M transpose(const M& a) { return a.transpose(); }
  M dot(const M& a, const M& b) {
    return Mat::Constant(1, 1, a.cwiseProduct(b).sum());
  }
  M sum_all(const M& a) { return Mat::Constant(1, 1, a.sum()); }
  M concat_rows(const std::vector<M>& parts) {
    Eigen::Index rows = 0;
    for (const M& p : parts) rows += p.rows();
    Mat out(rows, parts.front().cols());
    Eigen::Index r = 0;
    for (const M& p : parts) {
      out.middleRows(r, p.rows()) = p;
      r += p.rows();
    }
    return out;
  }
  M concat_cols(const std::vector<M>& parts) {
    Eigen::Index cols = 0;
    for (const M& p : parts) cols += p.cols();
    Mat out(parts.front().rows(), cols);
    Eigen::Index c = 0;
    for (const M& p : parts) {
      out.middleCols(c, p.cols()) = p;
      c += p.cols();
    }
    return out;
  }
  M slice_rows(const M& a, Eigen::Index r0, Eigen::Index n) {
    return a.middleRows(r0, n);
  }
  M slice_cols(const M& a, Eigen::Index c0, Eigen::Index n) {
    return a.middleCols(c0, n);
  }
  M add_row_broadcast(const M& a, const M& row) {
    Mat out = a;
    out.rowwise() += row.row(0);
    return out;
  }
  M mul_row_broadcast(const M& a, const M& row) {
    return (a.array().rowwise() * row.row(0).array()).matrix();
  }
  M softmax_rows(const M& a) {
    Mat out(a.rows(), a.cols());
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      double m = a.row(r).maxCoeff();
      Eigen::ArrayXd ex = (a.row(r).array() - m).exp();
      out.row(r) = (ex / ex.sum()).matrix().transpose();
    }
    return out;
  }
  M layer_norm_rows(const M& a, double eps = 1e-5) {
    Mat out(a.rows(), a.cols());
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      double mu = a.row(r).mean();
      Eigen::RowVectorXd c = a.row(r).array() - mu;
      double var = c.squaredNorm() / static_cast<double>(a.cols());
      out.row(r) = c / std::sqrt(var + eps);
    }
    return out;
  }
  M vtanh(const M& a) { return a.array().tanh().matrix(); }
  M vexp(const M& a) { return a.array().exp().matrix(); }
  M vlog(const M& a) { return a.array().log().matrix(); }
  M vsqrt(const M& a) { return a.array().sqrt().matrix(); }
  M sigmoid(const M& a) {
    return a.unaryExpr([](double x) { return ad::detail::stable_sigmoid(x); });
  }
  M softplus(const M& a) {
    return a.unaryExpr([](double x) { return ad::detail::stable_softplus(x); });
  }

  static constexpr bool records_gradients = false;
};

class TapeBackend {
 public:
  explicit TapeBackend(ad::Tape& tape) : tape_(&tape) {}

  using M = ad::Var;

  // Parameters bind once per tape so repeated uses share one leaf node.
  M param(Param& p) {
    auto it = bound_.find(&p);
    if (it != bound_.end()) return it->second;
    M v = tape_->leaf(p.value);
    bound_.emplace(&p, v);
    return v;
  }

  // Adds d(output)/d(param) into every bound parameter's grad accumulator;
  // call after tape().backward().
  void harvest_grads() {
    for (auto& [p, v] : bound_) p->grad += tape_->grad(v);
  }

  // Analytic gradient of a single parameter from the last backward pass.
  Mat grad_of(Param& p) const {
    auto it = bound_.find(&p);
    if (it == bound_.end()) {
      return Mat::Zero(p.value.rows(), p.value.cols());
    }
    return tape_->grad(it->second);
  }

  ad::Tape& tape() { return *tape_; }

  M constant(Mat m) { return tape_->constant(std::move(m)); }
  M constant_scalar(double v) { return tape_->constant_scalar(v); }
  const Mat& value(M m) const { return tape_->value(m); }
  double scalar(M m) const { return tape_->scalar(m); }

  M add(M a, M b) { return ad::add(a, b); }
  M sub(M a, M b) { return ad::sub(a, b); }
  M scale(M a, double c) { return ad::scale(a, c); }
  M mul(M a, M b) { return ad::mul(a, b); }
  M div(M a, M b) { return ad::div(a, b); }
  M matmul(M a, M b) { return ad::matmul(a, b); }
  M transpose(M a) { return ad::transpose(a); }
  M dot(M a, M b) { return ad::dot(a, b); }
  M sum_all(M a) { return ad::sum_all(a); }
  M concat_rows(const std::vector<M>& parts) { return ad::concat_rows(parts); }
  M concat_cols(const std::vector<M>& parts) { return ad::concat_cols(parts); }
  M slice_rows(M a, Eigen::Index r0, Eigen::Index n) {
    return ad::slice_rows(a, r0, n);
  }
  M slice_cols(M a, Eigen::Index c0, Eigen::Index n) {
    return ad::slice_cols(a, c0, n);
  }
  M add_row_broadcast(M a, M row) { return ad::add_row_broadcast(a, row); }
  M mul_row_broadcast(M a, M row) { return ad::mul_row_broadcast(a, row); }
  M softmax_rows(M a) { return ad::softmax_rows(a); }
  M layer_norm_rows(M a, double eps = 1e-5) {
    return ad::layer_norm_rows(a, eps);
  }
  M vtanh(M a) { return ad::vtanh(a); }
  M vexp(M a) { return ad::vexp(a); }
  M vlog(M a) { return ad::vlog(a); }
  M vsqrt(M a) { return ad::vsqrt(a); }
  M sigmoid(M a) { return ad::sigmoid(a); }
  M softplus(M a) { return ad::softplus(a); }

  static constexpr bool records_gradients = true;

 private:
  ad::Tape* tape_;
  std::unordered_map<Param*, M> bound_;
};

}  // namespace ctpp

#endif  // CTPP_BACKEND_HPP
