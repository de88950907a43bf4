#pragma once

#include <deque>
#include <vector>

#include "copyhan/han.hpp"
#include "copyhan/tensor.hpp"
#include "copyhan/transformer.hpp"
#include "copyhan/types.hpp"

namespace copyhan {

// Parameters of the copy gate and of the attention that produces c_t.
struct CopyParams {
  Tensor w_state;    // [d x 1], applied to h~_t
  Tensor w_source;   // [d x 1], applied to c_t
  Tensor w_context;  // [d x 1], applied to d_t
  Tensor bias;       // [1 x 1]
  MultiHeadParams source_attn;
};

struct CopyOptions {
  // Drop reserved tokens from the copy distribution and renormalise the rest.
  bool exclude_reserved = true;
};

// c_t = MultiAtt(h~_t, h~_enc, h~_enc) for every row of `integrated`.
AttentionResult encoder_context_attention(const Tensor& integrated, const EncodedSentence& encoded,
                                          const CopyParams& params);

// sigmoid(W_h~ h~_t + W_c c_t + W_dy d_t + b), shape [rows x 1].
Tensor copy_gate(const Tensor& integrated, const Tensor& source_context, const Tensor& doc_context,
                 const CopyParams& params);

// Head-averaged copy weights scattered onto the target vocabulary, shape
// [rows x vocab]. Token i of cached sentence j receives
// (1/m^2) (sum_l a_j^l) (sum_l a_{j,i}^l); repeated types add up. Returns an
// undefined tensor when no copyable token exists in the cache.
Tensor copy_alpha(const HanAttention& attention, const std::vector<TokenIds>& cache_tokens, std::size_t vocab_size,
                  const CopyOptions& options = {});

struct CopyWeights {
  std::vector<std::vector<double>> token_alpha;  // [j][i], before scatter
  std::vector<double> alpha_vocab;
};

// Value-level form of copy_alpha for a single position.
CopyWeights copy_attention_weights(const AttentionTrace& trace, const std::vector<TokenIds>& cache_tokens,
                                   std::size_t vocab_size, const CopyOptions& options = {});

// (1 - p_copy) P_vocab + p_copy alpha, row by row.
Tensor mix_distributions(const Tensor& p_vocab, const Tensor& alpha, const Tensor& p_copy);

std::vector<TokenIds> cache_tokens(const std::deque<CacheEntry>& cache);

}  // namespace copyhan
