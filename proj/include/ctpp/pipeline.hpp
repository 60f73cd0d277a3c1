#ifndef CTPP_PIPELINE_HPP
#define CTPP_PIPELINE_HPP

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "ctpp/backend.hpp"
#include "ctpp/common.hpp"
#include "ctpp/decoder.hpp"
#include "ctpp/embedding.hpp"
#include "ctpp/encoder.hpp"
#include "ctpp/event.hpp"
#include "ctpp/model.hpp"
#include "ctpp/prompt_pool.hpp"
#include "ctpp/tasks.hpp"

namespace ctpp {

// Cosine distance as a backend expression (1x1), gradients flowing to both
// sides under the tape backend.
template <class B>
typename B::M cosine_distance_expr(B& b, typename B::M a, typename B::M v) {
  typename B::M d = b.dot(a, v);
  typename B::M na = b.vsqrt(b.dot(a, a));
  typename B::M nb = b.vsqrt(b.dot(v, v));
  return b.sub(b.constant_scalar(1.0), b.div(d, b.mul(na, nb)));
}

// Sum of cosine distances between a query and its selected keys.
template <class B>
typename B::M match_loss(B& b, PromptPool& pool, typename B::M query,
                         const RetrievalResult& result) {
  typename B::M keys = b.param(pool.keys);
  typename B::M total = b.constant_scalar(0.0);
  for (int idx : result.indices) {
    typename B::M key_row = b.slice_rows(keys, idx, 1);
    total = b.add(total, cosine_distance_expr(b, query, key_row));
  }
  return total;
}

// The full prompted-intensity computation for one event sequence, shared by
// training (tape backend) and sampling/evaluation (plain backend):
//   encoder states -> per-query retrieval -> prompt-event interaction ->
//   softplus intensity.
//
// A "query" is a time t conditioned on the first `hist` events; event-term,
// Monte-Carlo, and thinning intensities all go through the same path.
template <class B>
class SequencePipeline {
 public:
  SequencePipeline(B& b, Model& model, PromptPool* pool, PromptMode mode,
                   const EventSequence& seq)
      : b_(b), model_(model), pool_(pool), mode_(mode), seq_(seq) {
    if (mode_ != PromptMode::none && pool_ == nullptr) {
      throw ConfigError("pipeline: prompt mode requires a pool");
    }
    if (mode_ == PromptMode::naive &&
        model_.cfg.encoder != EncoderVariant::attention) {
      throw ConfigError("pipeline: naive prompting requires the attention encoder");
    }
    build_embeddings();
    if (model_.cfg.encoder == EncoderVariant::attention) {
      if (mode_ != PromptMode::naive) build_attention_trace();
    } else {
      build_recurrent_states();
    }
  }

  int num_events() const { return static_cast<int>(seq_.size()); }

  // Encoding of event i (1-based) given events 1..i.
  typename B::M event_state(int i) {
    if (i < 1 || i > num_events()) {
      throw ValidationError("event_state: index out of range");
    }
    if (model_.cfg.encoder == EncoderVariant::attention) {
      if (mode_ == PromptMode::naive) {
        // Matching queries in naive mode are the raw event embeddings.
        return event_tokens_[i - 1];
      }
      return b_.slice_rows(trace_->final_states, i, 1);
    }
    return recurrent_states_[i];
  }

  // Encoder state for a query at time t conditioned on the first `hist`
  // events (the attention variant attends from a type-free query token; the
  // recurrent variant decays the state over the gap).
  typename B::M query_state(double t, int hist) {
    check_query(t, hist);
    if (model_.cfg.encoder == EncoderVariant::attention) {
      if (mode_ == PromptMode::naive) {
        return naive_query_state(t, hist);
      }
      typename B::M token = query_token(t);
      return attention_query(b_, model_.encoder, *trace_, token, 1 + hist);
    }
    typename B::M rates = decay_rates(b_, model_.encoder);
    return decay_state(b_, recurrent_states_[hist], rates,
                       t - last_time(hist));
  }

  // Estimated conditional time for a query after `hist` events: the last
  // event time plus the running mean inter-event gap (window start when the
  // history is empty).
  double conditional_time(int hist) const {
    if (hist == 0) return seq_.horizon_start;
    return seq_.events[hist - 1].time +
           mean_inter_event_time(seq_, static_cast<std::size_t>(hist) + 1);
  }

  // Full prompted intensity vector (1 x E) at time t given `hist` events.
  typename B::M intensity_at(double t, int hist) {
    typename B::M h_q = query_state(t, hist);
    std::vector<typename B::M> prompts;
    if (mode_ == PromptMode::pre_t || mode_ == PromptMode::pro_t) {
      RetrievalResult sel =
          retrieve(b_.value(h_q).row(0), *pool_, pool_->top_n);
      prompts = build_prompts(sel, conditional_time(hist));
    }
    typename B::M h_dec;
    if (mode_ == PromptMode::pro_t) {
      typename B::M full = prompt_tune(b_, model_.decoder, h_q, prompts);
      Eigen::Index rows = b_.value(full).rows();
      h_dec = b_.slice_rows(full, rows - 1, 1);
    } else {
      // pre_t uses the retrieved prompts; none and naive reduce to plain
      // single-token self-attention.
      h_dec = prefix_tune(b_, model_.decoder, h_q, prompts);
    }
    return intensity(b_, model_.decoder, h_dec, t - last_time(hist));
  }

  // Retrieval and surrogate matching term for event i against its own
  // encoding (raw embedding in naive mode).
  typename B::M match_loss_event(int i, RetrievalResult* out_result = nullptr) {
    if (pool_ == nullptr) {
      throw ConfigError("match_loss_event: no pool configured");
    }
    typename B::M query = event_state(i);
    RetrievalResult sel = retrieve(b_.value(query).row(0), *pool_, pool_->top_n);
    if (out_result != nullptr) *out_result = sel;
    return match_loss(b_, *pool_, query, sel);
  }

  // Selected prompts assembled as [structural || temporal(t_p)] matrices.
  std::vector<typename B::M> build_prompts(const RetrievalResult& sel,
                                           double t_p) {
    std::vector<typename B::M> out;
    out.reserve(sel.indices.size());
    const TimeEncoding& te = model_.embedding.te;
    Eigen::RowVectorXd temporal = pool_->std_temporal_block
                                      ? Eigen::RowVectorXd::Ones(te.dim)
                                      : te(t_p);
    Mat block(pool_->prompt_len, te.dim);
    block.rowwise() = temporal;
    for (int idx : sel.indices) {
      typename B::M structural = b_.param(pool_->prompts[idx].structural);
      out.push_back(b_.concat_cols({structural, b_.constant(block)}));
    }
    return out;
  }

  double last_time(int hist) const {
    return hist == 0 ? seq_.horizon_start : seq_.events[hist - 1].time;
  }

 private:
  void check_query(double t, int hist) const {
    if (hist < 0 || hist > num_events()) {
      throw ValidationError("query_state: history size out of range");
    }
    if (t <= last_time(hist)) {
      throw ValidationError("query_state: query time must lie strictly after "
                            "the history");
    }
  }

  typename B::M query_token(double t) {
    return b_.concat_cols(
        {b_.param(model_.encoder.query_type),
         b_.constant(model_.embedding.te(t))});
  }

  void build_embeddings() {
    event_tokens_.reserve(seq_.size());
    typename B::M table = b_.param(model_.embedding.type_table);
    for (const Event& ev : seq_.events) {
      model_.embedding.check_type(ev.type_id);
      typename B::M type_row = b_.slice_rows(table, ev.type_id - 1, 1);
      typename B::M te_row = b_.constant(model_.embedding.te(ev.time));
      event_tokens_.push_back(b_.concat_cols({type_row, te_row}));
    }
  }

  void build_attention_trace() {
    std::vector<typename B::M> rows;
    rows.reserve(seq_.size() + 1);
    rows.push_back(b_.param(model_.encoder.bos));
    for (typename B::M tok : event_tokens_) rows.push_back(tok);
    typename B::M tokens = b_.concat_rows(rows);
    trace_ = attention_forward(b_, model_.encoder, tokens, 0);
  }

  void build_recurrent_states() {
    recurrent_states_.reserve(seq_.size() + 1);
    recurrent_states_.push_back(b_.param(model_.encoder.initial_state));
    typename B::M rates = decay_rates(b_, model_.encoder);
    double prev = seq_.horizon_start;
    for (std::size_t i = 0; i < seq_.size(); ++i) {
      double gap = seq_.events[i].time - prev;
      typename B::M decayed =
          decay_state(b_, recurrent_states_.back(), rates, gap);
      recurrent_states_.push_back(
          recurrent_update(b_, model_.encoder, decayed, event_tokens_[i]));
      prev = seq_.events[i].time;
    }
  }

  // Naive prompting re-encodes per query: retrieval runs on the raw query
  // embedding and the selected prompts are prepended to the token stream,
  // visible to every position.
  typename B::M naive_query_state(double t, int hist) {
    typename B::M token = query_token(t);
    RetrievalResult sel =
        retrieve(b_.value(token).row(0), *pool_, pool_->top_n);
    std::vector<typename B::M> prompts =
        build_prompts(sel, conditional_time(hist));
    std::vector<typename B::M> rows;
    rows.reserve(prompts.size() + hist + 2);
    for (typename B::M p : prompts) rows.push_back(p);
    Eigen::Index prefix_rows = prompts.empty()
                                   ? 0
                                   : static_cast<Eigen::Index>(prompts.size()) *
                                         pool_->prompt_len;
    rows.push_back(b_.param(model_.encoder.bos));
    for (int i = 0; i < hist; ++i) rows.push_back(event_tokens_[i]);
    rows.push_back(token);
    typename B::M tokens = b_.concat_rows(rows);
    AttentionTrace<B> trace =
        attention_forward(b_, model_.encoder, tokens, prefix_rows);
    Eigen::Index n = b_.value(trace.final_states).rows();
    return b_.slice_rows(trace.final_states, n - 1, 1);
  }

  B& b_;
  Model& model_;
  PromptPool* pool_;
  PromptMode mode_;
  const EventSequence& seq_;

  std::vector<typename B::M> event_tokens_;
  std::optional<AttentionTrace<B>> trace_;
  std::vector<typename B::M> recurrent_states_;
};

// Spec-facing encoder surface on the plain backend: hidden states for every
// prefix of the given events.
inline std::vector<Eigen::RowVectorXd> encode(Model& model,
                                              const EventSequence& seq) {
  EigenBackend b;
  SequencePipeline<EigenBackend> pipe(b, model, nullptr, PromptMode::none, seq);
  std::vector<Eigen::RowVectorXd> out;
  out.reserve(seq.size());
  for (int i = 1; i <= pipe.num_events(); ++i) {
    out.push_back(b.value(pipe.event_state(i)).row(0));
  }
  return out;
}

inline Eigen::RowVectorXd encode_at_time(Model& model, const EventSequence& seq,
                                         double t) {
  EigenBackend b;
  SequencePipeline<EigenBackend> pipe(b, model, nullptr, PromptMode::none, seq);
  return b.value(pipe.query_state(t, pipe.num_events())).row(0);
}

// Read-only intensity evaluator over a fixed history; the workhorse for
// thinning, prediction, and metric evaluation.
class IntensityEvaluator {
 public:
  IntensityEvaluator(Model& model, PromptPool* pool, PromptMode mode,
                     const EventSequence& history)
      : backend_(), pipe_(backend_, model, pool, mode, history),
        hist_(static_cast<int>(history.size())) {}

  Eigen::RowVectorXd intensities(double t) {
    return backend_.value(pipe_.intensity_at(t, hist_)).row(0);
  }

  double total_intensity(double t) { return intensities(t).sum(); }

  double last_time() const { return pipe_.last_time(hist_); }

 private:
  EigenBackend backend_;
  SequencePipeline<EigenBackend> pipe_;
  int hist_;
};

}  // namespace ctpp

#endif  // CTPP_PIPELINE_HPP
