#ifndef CTPP_EMBEDDING_HPP
#define CTPP_EMBEDDING_HPP

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "ctpp/common.hpp"
#include "ctpp/params.hpp"

namespace ctpp {

// Sinusoidal encoding of a continuous time value. Dimension d (1-based) is
//   cos(t/n_unit * (5*n_scale/n_unit)^((d-1)/D2))   for odd d,
//   sin(t/n_unit * (5*n_scale/n_unit)^(d/D2))       for even d.
struct TimeEncoding {
  int dim = 64;      // D2
  int n_scale = 64;  // frequency spread, matched to the data's time scales
  int n_unit = 1;    // base time unit divisor

  Eigen::RowVectorXd operator()(double t) const {
    Eigen::RowVectorXd out(dim);
    double base = 5.0 * static_cast<double>(n_scale) / n_unit;
    double scaled = t / n_unit;
    for (int d = 1; d <= dim; ++d) {
      if (d % 2 == 1) {
        out(d - 1) = std::cos(scaled * std::pow(base, double(d - 1) / dim));
      } else {
        out(d - 1) = std::sin(scaled * std::pow(base, double(d) / dim));
      }
    }
    return out;
  }
};

inline Eigen::RowVectorXd temporal_encoding(double t, int d2, int n_scale,
                                            int n_unit) {
  return TimeEncoding{d2, n_scale, n_unit}(t);
}

// Event type embedding table plus the temporal encoder; an event embeds as
// the concatenation [type row || TE(t)] of size D1 + D2.
struct EmbeddingTables {
  int num_types = 0;  // E
  int type_dim = 0;   // D1
  TimeEncoding te;

  Param type_table;  // E x D1

  int dim() const { return type_dim + te.dim; }

  void init(int e, int d1, TimeEncoding enc, Rng& rng) {
    num_types = e;
    type_dim = d1;
    te = enc;
    type_table.init_gaussian(e, d1, 0.1, rng);
  }

  void check_type(int type_id) const {
    if (type_id < 1 || type_id > num_types) {
      throw ValidationError("embed_event: type_id " + std::to_string(type_id) +
                            " outside 1.." + std::to_string(num_types));
    }
  }

  Eigen::RowVectorXd embed_event(int type_id, double t) const {
    check_type(type_id);
    Eigen::RowVectorXd out(dim());
    out.head(type_dim) = type_table.value.row(type_id - 1);
    out.tail(te.dim) = te(t);
    return out;
  }

  void collect(ParamRefs& refs) {
    refs.push_back({"embedding.type_table", &type_table, false});
  }
};

}  // namespace ctpp

#endif  // CTPP_EMBEDDING_HPP
