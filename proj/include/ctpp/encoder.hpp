#ifndef CTPP_ENCODER_HPP
#define CTPP_ENCODER_HPP

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "ctpp/backend.hpp"
#include "ctpp/common.hpp"
#include "ctpp/embedding.hpp"
#include "ctpp/params.hpp"

namespace ctpp {

enum class EncoderVariant { attention, decay_recurrent };

inline std::string to_string(EncoderVariant v) {
  return v == EncoderVariant::attention ? "attention" : "decay_recurrent";
}

inline EncoderVariant encoder_variant_from_string(const std::string& s) {
  if (s == "attention") return EncoderVariant::attention;
  if (s == "decay_recurrent") return EncoderVariant::decay_recurrent;
  throw ConfigError("unknown encoder variant '" + s + "'");
}

struct AttentionLayerParams {
  Param wq, wk, wv, wo;      // D x D
  Param ln1_gain, ln1_bias;  // 1 x D
  Param ln2_gain, ln2_bias;
  Param ffn_w1, ffn_b1;      // D x F, 1 x F
  Param ffn_w2, ffn_b2;      // F x D, 1 x D
};

// Sequence encoder. The attention variant is a pre-norm causal self-attention
// stack over [bos, x_1, ..., x_I] with a learnable start token; the recurrent
// variant is a gated update cell whose state decays exponentially toward zero
// across inter-event gaps.
struct EncoderParams {
  EncoderVariant variant = EncoderVariant::attention;
  int dim = 0;    // D
  int heads = 1;
  int ffn_dim = 0;

  // attention variant
  std::vector<AttentionLayerParams> layers;
  Param final_gain, final_bias;  // 1 x D
  Param bos;                     // 1 x D, learned initial token
  Param query_type;              // 1 x D1, type block of a time-query token

  // recurrent variant
  Param wz, uz, wr, ur, wc, uc;  // D x D
  Param bz, br, bc;              // 1 x D
  Param decay_raw;               // 1 x D; softplus gives positive decay rates
  Param initial_state;           // 1 x D

  void init(EncoderVariant var, int d, int d1, int n_layers, int n_heads,
            Rng& rng) {
    variant = var;
    dim = d;
    heads = n_heads;
    if (var == EncoderVariant::attention) {
      if (d % n_heads != 0) {
        throw ConfigError("encoder: hidden dim must be divisible by heads");
      }
      ffn_dim = 2 * d;
      double std_proj = 1.0 / std::sqrt(static_cast<double>(d));
      layers.resize(n_layers);
      for (AttentionLayerParams& l : layers) {
        l.wq.init_gaussian(d, d, std_proj, rng);
        l.wk.init_gaussian(d, d, std_proj, rng);
        l.wv.init_gaussian(d, d, std_proj, rng);
        l.wo.init_gaussian(d, d, std_proj, rng);
        l.ln1_gain.init(1, d);
        l.ln1_gain.value.setOnes();
        l.ln1_bias.init(1, d);
        l.ln2_gain.init(1, d);
        l.ln2_gain.value.setOnes();
        l.ln2_bias.init(1, d);
        l.ffn_w1.init_gaussian(d, ffn_dim, std_proj, rng);
        l.ffn_b1.init(1, ffn_dim);
        l.ffn_w2.init_gaussian(ffn_dim, d, 1.0 / std::sqrt(double(ffn_dim)), rng);
        l.ffn_b2.init(1, d);
      }
      final_gain.init(1, d);
      final_gain.value.setOnes();
      final_bias.init(1, d);
      bos.init_gaussian(1, d, 0.1, rng);
      query_type.init_gaussian(1, d1, 0.1, rng);
    } else {
      double std_proj = 1.0 / std::sqrt(static_cast<double>(d));
      for (Param* w : {&wz, &uz, &wr, &ur, &wc, &uc}) {
        w->init_gaussian(d, d, std_proj, rng);
      }
      for (Param* b : {&bz, &br, &bc}) b->init(1, d);
      decay_raw.init(1, d);  // softplus(0) ~ 0.69 initial decay rate
      initial_state.init_gaussian(1, d, 0.1, rng);
    }
  }

  void collect(ParamRefs& refs) {
    if (variant == EncoderVariant::attention) {
      for (std::size_t i = 0; i < layers.size(); ++i) {
        std::string p = "encoder.layer" + std::to_string(i) + ".";
        AttentionLayerParams& l = layers[i];
        refs.push_back({p + "wq", &l.wq, false});
        refs.push_back({p + "wk", &l.wk, false});
        refs.push_back({p + "wv", &l.wv, false});
        refs.push_back({p + "wo", &l.wo, false});
        refs.push_back({p + "ln1_gain", &l.ln1_gain, false});
        refs.push_back({p + "ln1_bias", &l.ln1_bias, false});
        refs.push_back({p + "ln2_gain", &l.ln2_gain, false});
        refs.push_back({p + "ln2_bias", &l.ln2_bias, false});
        refs.push_back({p + "ffn_w1", &l.ffn_w1, false});
        refs.push_back({p + "ffn_b1", &l.ffn_b1, false});
        refs.push_back({p + "ffn_w2", &l.ffn_w2, false});
        refs.push_back({p + "ffn_b2", &l.ffn_b2, false});
      }
      refs.push_back({"encoder.final_gain", &final_gain, false});
      refs.push_back({"encoder.final_bias", &final_bias, false});
      refs.push_back({"encoder.bos", &bos, false});
      refs.push_back({"encoder.query_type", &query_type, false});
    } else {
      refs.push_back({"encoder.wz", &wz, false});
      refs.push_back({"encoder.uz", &uz, false});
      refs.push_back({"encoder.bz", &bz, false});
      refs.push_back({"encoder.wr", &wr, false});
      refs.push_back({"encoder.ur", &ur, false});
      refs.push_back({"encoder.br", &br, false});
      refs.push_back({"encoder.wc", &wc, false});
      refs.push_back({"encoder.uc", &uc, false});
      refs.push_back({"encoder.bc", &bc, false});
      refs.push_back({"encoder.decay_raw", &decay_raw, false});
      refs.push_back({"encoder.initial_state", &initial_state, false});
    }
  }
};

namespace nnops {

// y = LN(x) * gain + bias, rowwise.
template <class B>
typename B::M layer_norm_affine(B& b, typename B::M x, Param& gain,
                                Param& bias) {
  return b.add_row_broadcast(
      b.mul_row_broadcast(b.layer_norm_rows(x), b.param(gain)), b.param(bias));
}

// Multi-head scaled dot-product attention; optional additive mask on the
// score matrix (0 = allowed, large negative = forbidden).
template <class B>
typename B::M multi_head_attention(B& b, typename B::M zq, typename B::M zk,
                                   typename B::M zv, Param& wq, Param& wk,
                                   Param& wv, Param& wo, int heads,
                                   const Mat* additive_mask = nullptr) {
  const Mat& kv = b.value(zk);
  const Mat& vv = b.value(zv);
  if (kv.rows() != vv.rows()) {
    throw NumericError("attention: key/value row counts disagree (" +
                       std::to_string(kv.rows()) + " vs " +
                       std::to_string(vv.rows()) + ")");
  }
  int d = static_cast<int>(b.value(zq).cols());
  if (kv.cols() != d) {
    throw NumericError("attention: query/key dims disagree");
  }
  int dh = d / heads;
  typename B::M q = b.matmul(zq, b.param(wq));
  typename B::M k = b.matmul(zk, b.param(wk));
  typename B::M v = b.matmul(zv, b.param(wv));
  std::vector<typename B::M> head_outs;
  head_outs.reserve(heads);
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < heads; ++h) {
    typename B::M qh = b.slice_cols(q, h * dh, dh);
    typename B::M kh = b.slice_cols(k, h * dh, dh);
    typename B::M vh = b.slice_cols(v, h * dh, dh);
    typename B::M scores = b.scale(b.matmul(qh, b.transpose(kh)), inv_sqrt);
    if (additive_mask != nullptr) {
      scores = b.add(scores, b.constant(*additive_mask));
    }
    typename B::M attn = b.softmax_rows(scores);
    head_outs.push_back(b.matmul(attn, vh));
  }
  typename B::M merged =
      heads == 1 ? head_outs.front() : b.concat_cols(head_outs);
  return b.matmul(merged, b.param(wo));
}

template <class B>
typename B::M ffn_block(B& b, typename B::M x, AttentionLayerParams& l) {
  typename B::M h = b.vtanh(
      b.add_row_broadcast(b.matmul(x, b.param(l.ffn_w1)), b.param(l.ffn_b1)));
  return b.add_row_broadcast(b.matmul(h, b.param(l.ffn_w2)), b.param(l.ffn_b2));
}

}  // namespace nnops

// Token rows with mask rule: the first `prefix_rows` rows are visible to
// everyone; the remainder attend causally (self-inclusive).
inline Mat causal_mask(Eigen::Index tokens, Eigen::Index prefix_rows) {
  Mat mask = Mat::Zero(tokens, tokens);
  for (Eigen::Index q = 0; q < tokens; ++q) {
    for (Eigen::Index k = 0; k < tokens; ++k) {
      if (k >= prefix_rows && k > q) mask(q, k) = -1e9;
    }
  }
  return mask;
}

// Attention-stack forward. Exposes each layer's input tokens so time queries
// can attend into the cached stack without re-encoding history.
template <class B>
struct AttentionTrace {
  std::vector<typename B::M> layer_inputs;  // one per layer, rows = tokens
  typename B::M final_states;               // after final layer norm
};

template <class B>
AttentionTrace<B> attention_forward(B& b, EncoderParams& enc,
                                    typename B::M tokens,
                                    Eigen::Index prefix_rows) {
  AttentionTrace<B> trace;
  Eigen::Index n = b.value(tokens).rows();
  Mat mask = causal_mask(n, prefix_rows);
  typename B::M x = tokens;
  for (AttentionLayerParams& l : enc.layers) {
    trace.layer_inputs.push_back(x);
    typename B::M normed = nnops::layer_norm_affine(b, x, l.ln1_gain, l.ln1_bias);
    typename B::M attn = nnops::multi_head_attention(
        b, normed, normed, normed, l.wq, l.wk, l.wv, l.wo, enc.heads, &mask);
    x = b.add(x, attn);
    typename B::M normed2 = nnops::layer_norm_affine(b, x, l.ln2_gain, l.ln2_bias);
    x = b.add(x, nnops::ffn_block(b, normed2, l));
  }
  trace.final_states =
      nnops::layer_norm_affine(b, x, enc.final_gain, enc.final_bias);
  return trace;
}

// Runs one query token through the cached stack: at every layer the query
// attends over the first `visible_rows` history tokens plus itself.
template <class B>
typename B::M attention_query(B& b, EncoderParams& enc,
                              const AttentionTrace<B>& trace,
                              typename B::M query_token,
                              Eigen::Index visible_rows) {
  typename B::M q = query_token;
  for (std::size_t li = 0; li < enc.layers.size(); ++li) {
    AttentionLayerParams& l = enc.layers[li];
    typename B::M hist = b.slice_rows(trace.layer_inputs[li], 0, visible_rows);
    typename B::M block = b.concat_rows({hist, q});
    typename B::M normed = nnops::layer_norm_affine(b, block, l.ln1_gain, l.ln1_bias);
    typename B::M normed_q = b.slice_rows(normed, visible_rows, 1);
    typename B::M attn = nnops::multi_head_attention(
        b, normed_q, normed, normed, l.wq, l.wk, l.wv, l.wo, enc.heads);
    q = b.add(q, attn);
    typename B::M normed2 = nnops::layer_norm_affine(b, q, l.ln2_gain, l.ln2_bias);
    q = b.add(q, nnops::ffn_block(b, normed2, l));
  }
  return nnops::layer_norm_affine(b, q, enc.final_gain, enc.final_bias);
}

// Elementwise positive decay rates.
template <class B>
typename B::M decay_rates(B& b, EncoderParams& enc) {
  return b.softplus(b.param(enc.decay_raw));
}

// State decayed across a time gap: h * exp(-rates * gap).
template <class B>
typename B::M decay_state(B& b, typename B::M state, typename B::M rates,
                          double gap) {
  return b.mul(state, b.vexp(b.scale(rates, -gap)));
}

// Gated update absorbing one event embedding into the decayed state.
template <class B>
typename B::M recurrent_update(B& b, EncoderParams& enc, typename B::M decayed,
                               typename B::M x) {
  int d = enc.dim;
  typename B::M z = b.sigmoid(b.add(
      b.add(b.matmul(x, b.param(enc.wz)), b.matmul(decayed, b.param(enc.uz))),
      b.param(enc.bz)));
  typename B::M r = b.sigmoid(b.add(
      b.add(b.matmul(x, b.param(enc.wr)), b.matmul(decayed, b.param(enc.ur))),
      b.param(enc.br)));
  typename B::M cand = b.vtanh(b.add(
      b.add(b.matmul(x, b.param(enc.wc)),
            b.matmul(b.mul(r, decayed), b.param(enc.uc))),
      b.param(enc.bc)));
  typename B::M one = b.constant(Mat::Ones(1, d));
  return b.add(b.mul(z, cand), b.mul(b.sub(one, z), decayed));
}

}  // namespace ctpp

#endif  // CTPP_ENCODER_HPP
