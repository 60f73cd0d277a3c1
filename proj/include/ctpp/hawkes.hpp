#ifndef CTPP_HAWKES_HPP
#define CTPP_HAWKES_HPP

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <string>
#include <vector>

#include "ctpp/common.hpp"
#include "ctpp/event.hpp"

namespace ctpp {

// Multivariate Hawkes law with exponential kernels:
//   lambda_j(t) = base_rates[j]
//               + sum over past events (e_k, t_k) of
//                 excitation(e_k, j) * exp(-decay * (t - t_k)).
struct HawkesParams {
  Eigen::VectorXd base_rates;   // length E, nonnegative
  Eigen::MatrixXd excitation;   // E x E, entry (i, j): jump to type j after a type-i event
  double decay = 1.0;

  int num_types() const { return static_cast<int>(base_rates.size()); }

  // Branching matrix is excitation / decay; spectral radius < 1 keeps the
  // process stationary (finite expected cluster sizes).
  double spectral_radius() const {
    Eigen::MatrixXd branching = excitation / decay;
    Eigen::EigenSolver<Eigen::MatrixXd> solver(branching, false);
    return solver.eigenvalues().cwiseAbs().maxCoeff();
  }

  void validate() const {
    int e = num_types();
    if (e < 1) throw ValidationError("hawkes: at least one event type required");
    if (excitation.rows() != e || excitation.cols() != e) {
      throw ValidationError("hawkes: excitation must be ExE");
    }
    if (decay <= 0.0) throw ValidationError("hawkes: decay must be positive");
    if (base_rates.minCoeff() < 0.0 || excitation.minCoeff() < 0.0) {
      throw ValidationError("hawkes: rates must be nonnegative");
    }
    if (base_rates.maxCoeff() > 0.0 || excitation.maxCoeff() > 0.0) {
      double rho = spectral_radius();
      if (rho >= 1.0) {
        throw ValidationError("hawkes: spectral radius " + format_double(rho) +
                              " >= 1, process not stationary");
      }
    }
  }
};

namespace detail {

// Exact thinning for exponential kernels: between events the total intensity
// is non-increasing, so the intensity just after the latest event bounds the
// whole gap.
inline void simulate_hawkes_into(const HawkesParams& p, double t_begin,
                                 double t_end, Rng& rng,
                                 std::vector<Event>& out) {
  const int e_types = p.num_types();
  Eigen::VectorXd excited = Eigen::VectorXd::Zero(e_types);  // kernel sums at time t
  double t = t_begin;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  while (true) {
    double bound = p.base_rates.sum() + excited.sum();
    if (bound <= 0.0) break;
    std::exponential_distribution<double> exp_draw(bound);
    double gap = exp_draw(rng);
    t += gap;
    if (t > t_end) break;
    excited *= std::exp(-p.decay * gap);
    Eigen::VectorXd lam = p.base_rates + excited;
    double total = lam.sum();
    if (unif(rng) * bound <= total) {
      double u = unif(rng) * total;
      int type = e_types - 1;
      double acc = 0.0;
      for (int j = 0; j < e_types; ++j) {
        acc += lam[j];
        if (u <= acc) {
          type = j;
          break;
        }
      }
      out.push_back({type + 1, t});
      excited += p.excitation.row(type).transpose();
    }
  }
}

}  // namespace detail

inline std::vector<EventSequence> generate_hawkes(const HawkesParams& params,
                                                  double horizon, int num_seqs,
                                                  std::uint64_t seed) {
  params.validate();
  if (horizon <= 0.0) throw ValidationError("hawkes: horizon must be positive");
  std::vector<EventSequence> out;
  out.reserve(num_seqs);
  for (int s = 0; s < num_seqs; ++s) {
    Rng rng(derive_seed(seed, seed_tag::data, s));
    EventSequence seq;
    seq.seq_id = "h" + std::to_string(s);
    seq.horizon_start = 0.0;
    seq.horizon_end = horizon;
    detail::simulate_hawkes_into(params, 0.0, horizon, rng, seq.events);
    seq.validate(params.num_types());
    out.push_back(std::move(seq));
  }
  return out;
}

// A regime holds until `until_frac` of the horizon; regimes are simulated
// independently and stitched, giving a controlled distribution shift.
struct HawkesRegime {
  HawkesParams params;
  double until_frac = 1.0;
};

inline std::vector<EventSequence> generate_regime_stream(
    const std::vector<HawkesRegime>& regimes, double horizon, int num_seqs,
    std::uint64_t seed) {
  if (regimes.empty()) throw ConfigError("generator: at least one regime required");
  int e_types = regimes.front().params.num_types();
  for (const auto& r : regimes) {
    r.params.validate();
    if (r.params.num_types() != e_types) {
      throw ConfigError("generator: regimes must share the type vocabulary");
    }
  }
  if (regimes.back().until_frac < 1.0) {
    throw ConfigError("generator: last regime must extend to the horizon end");
  }
  std::vector<EventSequence> out;
  out.reserve(num_seqs);
  for (int s = 0; s < num_seqs; ++s) {
    EventSequence seq;
    seq.seq_id = "h" + std::to_string(s);
    seq.horizon_start = 0.0;
    seq.horizon_end = horizon;
    double begin_frac = 0.0;
    for (std::size_t r = 0; r < regimes.size(); ++r) {
      Rng rng(derive_seed(seed, seed_tag::data, s, r));
      double t0 = begin_frac * horizon;
      double t1 = std::min(regimes[r].until_frac, 1.0) * horizon;
      if (t1 <= t0) continue;
      std::vector<Event> part;
      detail::simulate_hawkes_into(regimes[r].params, 0.0, t1 - t0, rng, part);
      for (Event& ev : part) {
        ev.time += t0;
        seq.events.push_back(ev);
      }
      begin_frac = regimes[r].until_frac;
    }
    seq.validate(e_types);
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace ctpp

#endif  // CTPP_HAWKES_HPP
