#include "copyhan/han.hpp"

#include <cmath>

#include "copyhan/errors.hpp"
#include "copyhan/ops.hpp"

namespace copyhan {

ContextState::ContextState(std::size_t n) : capacity_(n) {}

void ContextState::push(std::deque<CacheEntry>& cache, CacheEntry entry, std::size_t capacity) {
  if (capacity == 0) return;
  if (entry.token_ids.empty()) throw ContractError("context cache entries must be non-empty");
  if (entry.states.rows() != entry.token_ids.size()) {
    throw DimensionError("context cache entry has " + std::to_string(entry.states.rows()) + " state rows for " +
                         std::to_string(entry.token_ids.size()) + " tokens");
  }
  cache.push_back(std::move(entry));
  while (cache.size() > capacity) cache.pop_front();
}

void ContextState::push_source(CacheEntry entry) { push(source_, std::move(entry), capacity_); }
void ContextState::push_target(CacheEntry entry) { push(target_, std::move(entry), capacity_); }

void ContextState::clear() {
  source_.clear();
  target_.clear();
}

AttentionTrace trace_row(const HanAttention& attention, std::size_t row) {
  AttentionTrace trace;
  for (std::size_t h = 0; h < attention.sentence_weights.size(); ++h) {
    trace.sentence_weights.push_back(attention.sentence_weights[h].row_values(row));
    std::vector<std::vector<double>> words;
    for (const Tensor& w : attention.word_weights[h]) words.push_back(w.row_values(row));
    trace.word_weights.push_back(std::move(words));
  }
  return trace;
}

WordLevelResult word_level_context(const Tensor& hidden, const CacheEntry& entry, const HanParams& params) {
  if (entry.token_ids.empty()) throw ContractError("word-level context: empty context sentence");
  const Tensor query = params.word_query.forward(hidden);
  auto attn = multi_head_attention(query, entry.states, entry.states, params.word_attn);
  return {attn.output, std::move(attn.head_weights)};
}

SentenceLevelResult sentence_level_context(const Tensor& hidden, const std::vector<Tensor>& summaries,
                                           const HanParams& params) {
  if (summaries.empty()) throw ContractError("sentence-level context: no sentence summaries");
  const MultiHeadParams& mh = params.sentence_attn;
  const std::size_t d = mh.wq.rows();
  const std::size_t r = d / mh.heads;
  const double inv_sqrt_r = 1.0 / std::sqrt(static_cast<double>(r));

  const Tensor q = matmul(params.sentence_query.forward(hidden), mh.wq);
  std::vector<Tensor> keys, values;
  for (const Tensor& s : summaries) {
    if (s.rows() != hidden.rows()) throw DimensionError("sentence-level context: summary rows differ from queries");
    keys.push_back(matmul(s, mh.wk));
    values.push_back(matmul(s, mh.wv));
  }

  SentenceLevelResult result;
  std::vector<Tensor> heads;
  for (std::size_t h = 0; h < mh.heads; ++h) {
    const Tensor qh = slice_cols(q, h * r, r);
    std::vector<Tensor> logits;
    for (const Tensor& k : keys) logits.push_back(rowwise_dot(qh, slice_cols(k, h * r, r)));
    const Tensor weights = softmax_lastdim(scale(logits.size() == 1 ? logits.front() : concat_cols(logits), inv_sqrt_r));
    Tensor out;
    for (std::size_t j = 0; j < values.size(); ++j) {
      Tensor term = scale_rows(slice_cols(values[j], h * r, r), slice_cols(weights, j, 1));
      out = out.defined() ? add(out, term) : term;
    }
    heads.push_back(out);
    result.sentence_weights.push_back(weights);
  }
  const Tensor joined = mh.heads == 1 ? heads.front() : concat_cols(heads);
  const Tensor attended = add_row_bias(matmul(joined, mh.wo), mh.bo);
  result.context = positionwise_ffn(attended, params.ffn);
  return result;
}

GateResult gate_integrate(const Tensor& hidden, const Tensor& context, const HanParams& params) {
  if (hidden.shape() != context.shape()) throw DimensionError("gate: hidden and context shapes differ");
  const Tensor lambda = sigmoid(add(matmul(hidden, params.gate_hidden), matmul(context, params.gate_context)));
  const Tensor mixed = add(mul(lambda, hidden), mul(affine(lambda, -1.0, 1.0), context));
  return {mixed, lambda};
}

HanOutput apply_han(const Tensor& hidden, const std::deque<CacheEntry>& cache, const HanParams& params) {
  HanOutput out;
  if (cache.empty()) {
    out.integrated = hidden;
    return out;
  }
  const std::size_t heads = params.word_attn.heads;
  out.attention.word_weights.assign(heads, {});
  std::vector<Tensor> summaries;
  for (const CacheEntry& entry : cache) {
    auto word = word_level_context(hidden, entry, params);
    summaries.push_back(word.summary);
    for (std::size_t h = 0; h < heads; ++h) out.attention.word_weights[h].push_back(word.word_weights[h]);
  }
  auto sentence = sentence_level_context(hidden, summaries, params);
  out.attention.sentence_weights = std::move(sentence.sentence_weights);
  auto gated = gate_integrate(hidden, sentence.context, params);
  out.integrated = gated.integrated;
  out.context = sentence.context;
  out.gate = gated.gate;
  out.applied = true;
  return out;
}

}  // namespace copyhan
