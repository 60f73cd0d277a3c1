#ifndef CTPP_PARAMS_HPP
#define CTPP_PARAMS_HPP

#include <Eigen/Dense>
#include <random>
#include <string>
#include <vector>

#include "ctpp/common.hpp"

namespace ctpp {

using Mat = Eigen::MatrixXd;

// A learnable matrix with its gradient accumulator.
struct Param {
  Mat value;
  Mat grad;

  void init(Eigen::Index rows, Eigen::Index cols) {
    value = Mat::Zero(rows, cols);
    grad = Mat::Zero(rows, cols);
  }

  void init_gaussian(Eigen::Index rows, Eigen::Index cols, double stddev,
                     Rng& rng) {
    init(rows, cols);
    std::normal_distribution<double> dist(0.0, stddev);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) value(r, c) = dist(rng);
  }

  void zero_grad() { grad.setZero(); }
};

// Named view over a parameter; `pool_group` marks prompt-pool parameters that
// the asynchronous refresh gate controls.
struct ParamRef {
  std::string name;
  Param* param = nullptr;
  bool pool_group = false;
};

using ParamRefs = std::vector<ParamRef>;

inline void zero_grads(const ParamRefs& refs) {
  for (const ParamRef& r : refs) r.param->zero_grad();
}

}  // namespace ctpp

#endif  // CTPP_PARAMS_HPP
