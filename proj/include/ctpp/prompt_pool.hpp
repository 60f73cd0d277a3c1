#ifndef CTPP_PROMPT_POOL_HPP
#define CTPP_PROMPT_POOL_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctpp/common.hpp"
#include "ctpp/embedding.hpp"
#include "ctpp/params.hpp"

namespace ctpp {

inline double cosine_distance(const Eigen::RowVectorXd& a,
                              const Eigen::RowVectorXd& b) {
  double na = a.norm();
  double nb = b.norm();
  if (na == 0.0 || nb == 0.0) {
    throw ValidationError("cosine_distance: zero vector");
  }
  return 1.0 - a.dot(b) / (na * nb);
}

// A temporal prompt stores only its learnable structural block; the temporal
// block is recomputed from the query-side estimated conditional time and is
// never persisted.
struct TemporalPrompt {
  Param structural;  // L_p x D1
};

struct RetrievalResult {
  std::vector<int> indices;      // ascending distance, ties to lowest index
  std::vector<double> distances;
};

// Key-value store of M (key, temporal prompt) pairs. Keys are stored as one
// M x D matrix so refresh gating and serialization treat them uniformly.
struct PromptPool {
  int size = 0;         // M
  int top_n = 0;        // N
  int prompt_len = 0;   // L_p
  int type_dim = 0;     // D1
  int key_dim = 0;      // D
  bool std_temporal_block = false;  // all-ones temporal block variant

  Param keys;  // M x D
  std::vector<TemporalPrompt> prompts;

  void init(int m, int n, int l_p, int d1, int d, Rng& rng) {
    if (l_p % 2 != 0) {
      throw ConfigError("prompt pool: prompt length must be even");
    }
    if (n < 1 || n > m) {
      throw ConfigError("prompt pool: need 1 <= N <= M");
    }
    size = m;
    top_n = n;
    prompt_len = l_p;
    type_dim = d1;
    key_dim = d;
    keys.init(m, d);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < m; ++i) {
      Eigen::RowVectorXd k(d);
      do {
        for (int c = 0; c < d; ++c) k(c) = gauss(rng);
      } while (k.norm() == 0.0);
      keys.value.row(i) = k / k.norm();
    }
    prompts.resize(m);
    for (TemporalPrompt& p : prompts) {
      p.structural.init_gaussian(l_p, d1, 0.02, rng);
    }
  }

  void collect(ParamRefs& refs) {
    refs.push_back({"pool.keys", &keys, true});
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      refs.push_back({"pool.prompt" + std::to_string(i) + ".structural",
                      &prompts[i].structural, true});
    }
  }
};

// Top-N pool entries by ascending cosine distance to the query; exact scan,
// ties broken toward the lowest index.
inline RetrievalResult retrieve(const Eigen::RowVectorXd& query,
                                const PromptPool& pool, int n) {
  if (n < 1 || n > pool.size) {
    throw ValidationError("retrieve: N must be in 1..M (" + std::to_string(n) +
                          " vs M=" + std::to_string(pool.size) + ")");
  }
  std::vector<std::pair<double, int>> scored(pool.size);
  for (int i = 0; i < pool.size; ++i) {
    scored[i] = {cosine_distance(query, pool.keys.value.row(i)), i};
  }
  std::sort(scored.begin(), scored.end());
  RetrievalResult out;
  out.indices.reserve(n);
  out.distances.reserve(n);
  for (int i = 0; i < n; ++i) {
    out.indices.push_back(scored[i].second);
    out.distances.push_back(scored[i].first);
  }
  return out;
}

// Assembles the full L_p x D prompt: learnable structural columns followed by
// the deterministic temporal block, every row of which is TE(t_p) (or ones in
// the standard-prompt variant).
inline Mat build_temporal_prompt(const TemporalPrompt& entry, double t_p,
                                 const TimeEncoding& te,
                                 bool std_temporal_block = false) {
  const Mat& s = entry.structural.value;
  Mat out(s.rows(), s.cols() + te.dim);
  out.leftCols(s.cols()) = s;
  Eigen::RowVectorXd temporal =
      std_temporal_block ? Eigen::RowVectorXd::Ones(te.dim) : te(t_p);
  out.rightCols(te.dim).rowwise() = temporal;
  return out;
}

// True on epochs where the pool participates in the optimizer step.
inline bool refresh_gate(int epoch, int c) {
  if (c < 1) throw ConfigError("refresh_gate: C must be >= 1");
  return epoch % c == 0;
}

inline nlohmann::json pool_to_json(const PromptPool& pool) {
  nlohmann::json j;
  j["shape"] = {{"M", pool.size},
                {"L_p", pool.prompt_len},
                {"D1", pool.type_dim},
                {"D", pool.key_dim}};
  j["top_n"] = pool.top_n;
  j["std_temporal_block"] = pool.std_temporal_block;
  auto mat_to_json = [](const Mat& m) {
    std::vector<double> flat(m.size());
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) flat[r * m.cols() + c] = m(r, c);
    return flat;
  };
  j["keys"] = mat_to_json(pool.keys.value);
  nlohmann::json blocks = nlohmann::json::array();
  for (const TemporalPrompt& p : pool.prompts) {
    blocks.push_back(mat_to_json(p.structural.value));
  }
  j["structural"] = std::move(blocks);
  return j;
}

inline PromptPool pool_from_json(const nlohmann::json& j) {
  PromptPool pool;
  const auto& shape = j.at("shape");
  pool.size = shape.at("M").get<int>();
  pool.prompt_len = shape.at("L_p").get<int>();
  pool.type_dim = shape.at("D1").get<int>();
  pool.key_dim = shape.at("D").get<int>();
  pool.top_n = j.at("top_n").get<int>();
  pool.std_temporal_block = j.at("std_temporal_block").get<bool>();
  auto mat_from_json = [](const nlohmann::json& arr, Eigen::Index rows,
                          Eigen::Index cols) {
    if (static_cast<Eigen::Index>(arr.size()) != rows * cols) {
      throw ParseError("pool checkpoint: shape header disagrees with payload");
    }
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        m(r, c) = arr[r * cols + c].get<double>();
    return m;
  };
  pool.keys.init(pool.size, pool.key_dim);
  pool.keys.value = mat_from_json(j.at("keys"), pool.size, pool.key_dim);
  pool.prompts.resize(pool.size);
  const auto& blocks = j.at("structural");
  if (static_cast<int>(blocks.size()) != pool.size) {
    throw ParseError("pool checkpoint: expected M structural blocks");
  }
  for (int i = 0; i < pool.size; ++i) {
    pool.prompts[i].structural.init(pool.prompt_len, pool.type_dim);
    pool.prompts[i].structural.value =
        mat_from_json(blocks[i], pool.prompt_len, pool.type_dim);
  }
  return pool;
}

}  // namespace ctpp

#endif  // CTPP_PROMPT_POOL_HPP
