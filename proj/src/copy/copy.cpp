#include "copyhan/copy.hpp"

#include "copyhan/errors.hpp"
#include "copyhan/ops.hpp"

namespace copyhan {

AttentionResult encoder_context_attention(const Tensor& integrated, const EncodedSentence& encoded,
                                          const CopyParams& params) {
  return multi_head_attention(integrated, encoded.states, encoded.states, params.source_attn);
}

Tensor copy_gate(const Tensor& integrated, const Tensor& source_context, const Tensor& doc_context,
                 const CopyParams& params) {
  Tensor logit = add(add(matmul(integrated, params.w_state), matmul(source_context, params.w_source)),
                     matmul(doc_context, params.w_context));
  return sigmoid(add_row_bias(logit, params.bias));
}

namespace {

std::vector<Tensor> head_averaged_token_weights(const HanAttention& attention, std::size_t sentences) {
  const std::size_t heads = attention.sentence_weights.size();
  if (heads == 0) throw ContractError("copy weights: attention trace has no heads");
  if (attention.word_weights.size() != heads) throw ContractError("copy weights: head counts differ between levels");
  if (attention.sentence_weights.front().cols() != sentences) {
    throw ContractError("copy weights: trace covers " + std::to_string(attention.sentence_weights.front().cols()) +
                        " sentences but the cache holds " + std::to_string(sentences));
  }
  const double inv_m = 1.0 / static_cast<double>(heads);
  Tensor sentence_sum = attention.sentence_weights.front();
  for (std::size_t h = 1; h < heads; ++h) sentence_sum = add(sentence_sum, attention.sentence_weights[h]);
  const Tensor sentence_avg = scale(sentence_sum, inv_m);

  std::vector<Tensor> tokens;
  for (std::size_t j = 0; j < sentences; ++j) {
    if (attention.word_weights.front().size() != sentences) throw ContractError("copy weights: sentence count mismatch");
    Tensor word_sum = attention.word_weights.front()[j];
    for (std::size_t h = 1; h < heads; ++h) word_sum = add(word_sum, attention.word_weights[h][j]);
    tokens.push_back(scale_rows(scale(word_sum, inv_m), slice_cols(sentence_avg, j, 1)));
  }
  return tokens;
}

}  // namespace

Tensor copy_alpha(const HanAttention& attention, const std::vector<TokenIds>& cache_tokens, std::size_t vocab_size,
                  const CopyOptions& options) {
  const auto tokens = head_averaged_token_weights(attention, cache_tokens.size());
  bool any_copyable = false;
  bool any_excluded = false;
  Tensor alpha;
  for (std::size_t j = 0; j < cache_tokens.size(); ++j) {
    const TokenIds& ids = cache_tokens[j];
    if (tokens[j].cols() != ids.size()) {
      throw ContractError("copy weights: sentence " + std::to_string(j) + " has " + std::to_string(ids.size()) +
                          " tokens but " + std::to_string(tokens[j].cols()) + " word weights");
    }
    std::vector<double> scatter(ids.size() * vocab_size, 0.0);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab_size) {
        throw ContractError("copy weights: cached token id outside the target vocabulary");
      }
      if (options.exclude_reserved && is_reserved(ids[i])) {
        any_excluded = true;
        continue;
      }
      any_copyable = true;
      scatter[i * vocab_size + static_cast<std::size_t>(ids[i])] = 1.0;
    }
    Tensor part = matmul(tokens[j], Tensor::from_data({ids.size(), vocab_size}, std::move(scatter)));
    alpha = alpha.defined() ? add(alpha, part) : part;
  }
  if (!any_copyable) return {};
  return any_excluded ? normalize_rows(alpha) : alpha;
}

CopyWeights copy_attention_weights(const AttentionTrace& trace, const std::vector<TokenIds>& cache_tokens,
                                   std::size_t vocab_size, const CopyOptions& options) {
  if (trace.sentence_weights.size() != trace.word_weights.size()) {
    throw ContractError("copy weights: head counts differ between levels");
  }
  HanAttention attention;
  for (std::size_t h = 0; h < trace.sentence_weights.size(); ++h) {
    attention.sentence_weights.push_back(Tensor::row(trace.sentence_weights[h]));
    if (trace.word_weights[h].size() != cache_tokens.size()) {
      throw ContractError("copy weights: trace sentence count differs from cache");
    }
    std::vector<Tensor> words;
    for (std::size_t j = 0; j < trace.word_weights[h].size(); ++j) {
      if (trace.word_weights[h][j].size() != cache_tokens[j].size()) {
        throw ContractError("copy weights: word weight count differs from cached token count");
      }
      words.push_back(Tensor::row(trace.word_weights[h][j]));
    }
    attention.word_weights.push_back(std::move(words));
  }
  NoGradGuard no_grad;
  CopyWeights out;
  for (const Tensor& t : head_averaged_token_weights(attention, cache_tokens.size())) out.token_alpha.push_back(t.row_values(0));
  const Tensor alpha = copy_alpha(attention, cache_tokens, vocab_size, options);
  out.alpha_vocab = alpha.defined() ? alpha.row_values(0) : std::vector<double>(vocab_size, 0.0);
  return out;
}

Tensor mix_distributions(const Tensor& p_vocab, const Tensor& alpha, const Tensor& p_copy) {
  if (p_vocab.shape() != alpha.shape()) throw DimensionError("mix: P_vocab and alpha shapes differ");
  return add(scale_rows(p_vocab, affine(p_copy, -1.0, 1.0)), scale_rows(alpha, p_copy));
}

std::vector<TokenIds> cache_tokens(const std::deque<CacheEntry>& cache) {
  std::vector<TokenIds> out;
  for (const auto& e : cache) out.push_back(e.token_ids);
  return out;
}

}  // namespace copyhan
