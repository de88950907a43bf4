#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "copyhan/tensor.hpp"
#include "copyhan/types.hpp"

namespace copyhan {

struct TransformerConfig {
  std::size_t d_model = 32;
  std::size_t n_layers = 2;
  std::size_t m_heads = 2;
  std::size_t d_ff = 64;
  std::size_t vocab_src = 0;
  std::size_t vocab_tgt = 0;
  double dropout = 0.1;
  std::size_t max_len = 256;
  double label_smoothing = 0.1;

  // Throws ContractError describing the first violated constraint.
  void validate() const;

  static TransformerConfig toy();
  // Base-size setting: 512 wide, 6 layers, 8 heads, 50k vocabularies.
  static TransformerConfig full_scale();
};

// Whether a training forward pass applies dropout, and the generator it draws from.
struct ForwardMode {
  bool training = false;
  std::mt19937_64* rng = nullptr;

  static ForwardMode eval() { return {}; }
  static ForwardMode train(std::mt19937_64& rng) { return {true, &rng}; }
};

struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [1 x out]; may be undefined

  Tensor forward(const Tensor& x) const;
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;
};

// Per-head query/key/value projections are column blocks of wq/wk/wv.
struct MultiHeadParams {
  Tensor wq;  // [d x d]
  Tensor wk;
  Tensor wv;
  Tensor wo;
  Tensor bo;  // [1 x d]
  std::size_t heads = 1;
};

struct FeedForwardParams {
  Linear inner;  // d -> d_ff
  Linear outer;  // d_ff -> d
};

struct EncoderLayerParams {
  MultiHeadParams self_attn;
  LayerNormParams norm_attn;
  FeedForwardParams ffn;
  LayerNormParams norm_ffn;
};

struct DecoderLayerParams {
  MultiHeadParams self_attn;
  LayerNormParams norm_self;
  MultiHeadParams cross_attn;
  LayerNormParams norm_cross;
  FeedForwardParams ffn;
  LayerNormParams norm_ffn;
};

struct TransformerParams {
  Tensor src_embedding;  // [vocab_src x d]
  Tensor tgt_embedding;  // [vocab_tgt x d]; untied from the source table and output layer
  std::vector<EncoderLayerParams> encoder;
  std::vector<DecoderLayerParams> decoder;
  Linear output;  // d -> vocab_tgt
};

// Attention mask: true entries are excluded. Row-major [queries x keys].
using AttentionMask = std::vector<bool>;

struct AttentionResult {
  Tensor output;
  std::vector<Tensor> head_weights;  // one [queries x keys] matrix per head
};

// softmax(Q K^T / sqrt(r)) V with masked logits set to -inf. A query row whose
// keys are all masked is a contract error.
AttentionResult scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                     const AttentionMask* mask = nullptr);

AttentionResult multi_head_attention(const Tensor& query_rows, const Tensor& key_rows, const Tensor& value_rows,
                                     const MultiHeadParams& params, const AttentionMask* mask = nullptr);

// Two linear maps with ReLU between them, applied to each row independently.
Tensor positionwise_ffn(const Tensor& x, const FeedForwardParams& params, double dropout = 0.0,
                        const ForwardMode& mode = {});

// Sinusoidal table rows [0, length).
Tensor positional_encoding(std::size_t length, std::size_t d_model);

AttentionMask causal_mask(std::size_t length);

struct EncodedSentence {
  Tensor states;  // [len x d_model]
  TokenIds token_ids;
  std::vector<bool> pad_mask;
};

// Out-of-range ids are mapped to the unknown-token id.
EncodedSentence encode_sentence(const TokenIds& tokens, const TransformerParams& params,
                                const TransformerConfig& config, const ForwardMode& mode = {});

struct DecoderPass {
  Tensor states;                     // [prefix_len x d_model], final layer
  std::vector<Tensor> cross_weights; // final layer, per head [prefix_len x src_len]
};

// Causal decoder over the whole prefix; row t only depends on prefix[0..t].
DecoderPass decoder_states(const TokenIds& prefix, const EncodedSentence& encoded, const TransformerParams& params,
                           const TransformerConfig& config, const ForwardMode& mode = {});

struct DecodeStep {
  Tensor hidden;                     // [1 x d_model] for the last prefix position
  std::vector<Tensor> cross_weights; // per head [1 x src_len]
};

DecodeStep decode_step(const TokenIds& prefix, const EncodedSentence& encoded, const TransformerParams& params,
                       const TransformerConfig& config, const ForwardMode& mode = {});

// Softmax over target-vocabulary logits for each row of `states`.
Tensor output_distribution(const Tensor& states, const TransformerParams& params);

struct CrossEntropyResult {
  Tensor loss;                  // scalar, mean over positions
  std::size_t clamped = 0;      // gold probabilities that hit the 1e-12 floor
};

// Mean over rows of -sum_v q(v) log P(v) with q = (1 - eps) one_hot(gold) + eps / |V|.
// Probabilities are floored at 1e-12 before the log.
CrossEntropyResult cross_entropy(const Tensor& probs, const TokenIds& gold, double label_smoothing);

inline constexpr double kProbabilityFloor = 1e-12;

}  // namespace copyhan
