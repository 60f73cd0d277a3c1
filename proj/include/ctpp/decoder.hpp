#ifndef CTPP_DECODER_HPP
#define CTPP_DECODER_HPP

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "ctpp/backend.hpp"
#include "ctpp/common.hpp"
#include "ctpp/encoder.hpp"
#include "ctpp/params.hpp"

namespace ctpp {

enum class PromptMode { none, pre_t, pro_t, naive };

inline std::string to_string(PromptMode m) {
  switch (m) {
    case PromptMode::none: return "none";
    case PromptMode::pre_t: return "pre_t";
    case PromptMode::pro_t: return "pro_t";
    case PromptMode::naive: return "naive";
  }
  return "none";
}

inline PromptMode prompt_mode_from_string(const std::string& s) {
  if (s == "none") return PromptMode::none;
  if (s == "pre_t") return PromptMode::pre_t;
  if (s == "pro_t") return PromptMode::pro_t;
  if (s == "naive") return PromptMode::naive;
  throw ConfigError("unknown prompt mode '" + s + "'");
}

// Prompt-event interaction (one MHSA layer) followed by an MLP intensity head
// with softplus output, one intensity per event type.
struct DecoderParams {
  int dim = 0;        // D
  int heads = 1;
  int num_types = 0;  // E
  int hidden = 0;
  bool elapsed_feature = false;

  Param wq, wk, wv, wo;              // D x D
  Param mlp_w1, mlp_b1, mlp_w2, mlp_b2;

  void init(int d, int n_heads, int e, Rng& rng, int hidden_dim = 0,
            bool with_elapsed = false) {
    if (d % n_heads != 0) {
      throw ConfigError("decoder: hidden dim must be divisible by heads");
    }
    dim = d;
    heads = n_heads;
    num_types = e;
    hidden = hidden_dim > 0 ? hidden_dim : d;
    elapsed_feature = with_elapsed;
    double std_proj = 1.0 / std::sqrt(static_cast<double>(d));
    wq.init_gaussian(d, d, std_proj, rng);
    wk.init_gaussian(d, d, std_proj, rng);
    wv.init_gaussian(d, d, std_proj, rng);
    wo.init_gaussian(d, d, std_proj, rng);
    int in = d + (elapsed_feature ? 1 : 0);
    mlp_w1.init_gaussian(in, hidden, 1.0 / std::sqrt(double(in)), rng);
    mlp_b1.init(1, hidden);
    mlp_w2.init_gaussian(hidden, e, 1.0 / std::sqrt(double(hidden)), rng);
    mlp_b2.init(1, e);
  }

  void collect(ParamRefs& refs) {
    refs.push_back({"decoder.wq", &wq, false});
    refs.push_back({"decoder.wk", &wk, false});
    refs.push_back({"decoder.wv", &wv, false});
    refs.push_back({"decoder.wo", &wo, false});
    refs.push_back({"decoder.mlp_w1", &mlp_w1, false});
    refs.push_back({"decoder.mlp_b1", &mlp_b1, false});
    refs.push_back({"decoder.mlp_w2", &mlp_w2, false});
    refs.push_back({"decoder.mlp_b2", &mlp_b2, false});
  }
};

// Plain multi-head self-attention over explicit query/key/value matrices.
template <class B>
typename B::M mhsa(B& b, DecoderParams& dec, typename B::M zq, typename B::M zk,
                   typename B::M zv) {
  return nnops::multi_head_attention(b, zq, zk, zv, dec.wq, dec.wk, dec.wv,
                                     dec.wo, dec.heads);
}

template <class B>
struct PrefixKv {
  typename B::M keys;    // (L_p*N/2 + 1) x D
  typename B::M values;  // (L_p*N/2 + 1) x D
};

// Splits each prompt row-wise into halves and prepends them to the attention
// keys and values while the query stays a single row.
template <class B>
PrefixKv<B> build_prefix_kv(B& b, const std::vector<typename B::M>& prompts,
                            typename B::M h) {
  std::vector<typename B::M> key_parts, value_parts;
  key_parts.reserve(prompts.size() + 1);
  value_parts.reserve(prompts.size() + 1);
  for (typename B::M p : prompts) {
    Eigen::Index rows = b.value(p).rows();
    if (rows % 2 != 0) {
      throw ValidationError("prefix tuning requires an even prompt length, got " +
                            std::to_string(rows));
    }
    key_parts.push_back(b.slice_rows(p, 0, rows / 2));
    value_parts.push_back(b.slice_rows(p, rows / 2, rows / 2));
  }
  key_parts.push_back(h);
  value_parts.push_back(h);
  return {b.concat_rows(key_parts), b.concat_rows(value_parts)};
}

// Prefix tuning: output keeps the query's 1 x D shape regardless of N.
template <class B>
typename B::M prefix_tune(B& b, DecoderParams& dec, typename B::M h,
                          const std::vector<typename B::M>& prompts) {
  PrefixKv<B> kv = build_prefix_kv(b, prompts, h);
  return mhsa(b, dec, h, kv.keys, kv.values);
}

// Prompt tuning: prompts prepend to query, key, and value alike; the result
// has L_p*N + 1 rows and the final row is the event's own position.
template <class B>
typename B::M prompt_tune(B& b, DecoderParams& dec, typename B::M h,
                          const std::vector<typename B::M>& prompts) {
  std::vector<typename B::M> parts(prompts.begin(), prompts.end());
  parts.push_back(h);
  typename B::M z = b.concat_rows(parts);
  return mhsa(b, dec, z, z, z);
}

// Naive prompting happens before the encoder: selected prompts are prepended
// to the embedded event tokens (the encoder mask keeps them visible to all).
template <class B>
typename B::M naive_prompt(B& b, const std::vector<typename B::M>& prompts,
                           typename B::M tokens) {
  if (prompts.empty()) return tokens;
  std::vector<typename B::M> parts(prompts.begin(), prompts.end());
  parts.push_back(tokens);
  return b.concat_rows(parts);
}

// lambda_e = softplus(MLP(h_dec))_e, strictly positive. The optional elapsed
// time since the last event enters as an extra MLP input when configured.
template <class B>
typename B::M intensity(B& b, DecoderParams& dec, typename B::M h_dec,
                        double elapsed = 0.0) {
  typename B::M in = h_dec;
  if (dec.elapsed_feature) {
    in = b.concat_cols({h_dec, b.constant_scalar(elapsed)});
  }
  typename B::M hidden = b.vtanh(b.add_row_broadcast(
      b.matmul(in, b.param(dec.mlp_w1)), b.param(dec.mlp_b1)));
  typename B::M pre = b.add_row_broadcast(b.matmul(hidden, b.param(dec.mlp_w2)),
                                          b.param(dec.mlp_b2));
  return b.softplus(pre);
}

}  // namespace ctpp

#endif  // CTPP_DECODER_HPP
