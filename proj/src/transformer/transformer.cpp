#include "copyhan/transformer.hpp"

#include <cmath>
#include <limits>

#include "copyhan/errors.hpp"
#include "copyhan/ops.hpp"

namespace copyhan {

void TransformerConfig::validate() const {
  if (d_model == 0 || n_layers == 0 || m_heads == 0 || d_ff == 0 || max_len == 0) {
    throw ContractError("transformer sizes must be at least 1");
  }
  if (vocab_src == 0 || vocab_tgt == 0) throw ContractError("vocabulary sizes must be at least 1");
  if (d_model % m_heads != 0) {
    throw ContractError("d_model (" + std::to_string(d_model) + ") must be divisible by the head count (" +
                        std::to_string(m_heads) + ")");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ContractError("dropout must lie in [0, 1)");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) throw ContractError("label smoothing must lie in [0, 1)");
}

TransformerConfig TransformerConfig::toy() { return {}; }

TransformerConfig TransformerConfig::full_scale() {
  TransformerConfig c;
  c.d_model = 512;
  c.n_layers = 6;
  c.m_heads = 8;
  c.d_ff = 2048;
  c.vocab_src = 50000;
  c.vocab_tgt = 50000;
  c.dropout = 0.1;
  c.max_len = 512;
  return c;
}

Tensor Linear::forward(const Tensor& x) const {
  Tensor y = matmul(x, weight);
  return bias.defined() ? add_row_bias(y, bias) : y;
}

AttentionResult scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionMask* mask) {
  if (q.cols() != k.cols()) {
    throw DimensionError("attention: query width " + std::to_string(q.cols()) + " differs from key width " +
                         std::to_string(k.cols()));
  }
  if (k.rows() != v.rows()) throw DimensionError("attention: key and value row counts differ");
  const std::size_t a = q.rows(), b = k.rows();
  Tensor logits = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(q.cols())));
  if (mask) {
    if (mask->size() != a * b) throw DimensionError("attention: mask does not match [queries x keys]");
    for (std::size_t i = 0; i < a; ++i) {
      bool any_open = false;
      for (std::size_t j = 0; j < b && !any_open; ++j) any_open = !(*mask)[i * b + j];
      if (!any_open) throw ContractError("attention: query row " + std::to_string(i) + " has every key masked");
    }
    logits = masked_fill(logits, *mask, -std::numeric_limits<double>::infinity());
  }
  Tensor weights = softmax_lastdim(logits);
  return {matmul(weights, v), {weights}};
}

AttentionResult multi_head_attention(const Tensor& query_rows, const Tensor& key_rows, const Tensor& value_rows,
                                     const MultiHeadParams& params, const AttentionMask* mask) {
  const std::size_t d = params.wq.rows();
  if (query_rows.cols() != d || key_rows.cols() != d || value_rows.cols() != d) {
    throw DimensionError("multi-head attention: inputs must have width " + std::to_string(d));
  }
  const std::size_t r = d / params.heads;
  const Tensor q = matmul(query_rows, params.wq);
  const Tensor k = matmul(key_rows, params.wk);
  const Tensor v = matmul(value_rows, params.wv);
  AttentionResult result;
  std::vector<Tensor> heads;
  heads.reserve(params.heads);
  for (std::size_t h = 0; h < params.heads; ++h) {
    auto head = scaled_dot_attention(slice_cols(q, h * r, r), slice_cols(k, h * r, r), slice_cols(v, h * r, r), mask);
    heads.push_back(head.output);
    result.head_weights.push_back(head.head_weights.front());
  }
  Tensor joined = params.heads == 1 ? heads.front() : concat_cols(heads);
  result.output = add_row_bias(matmul(joined, params.wo), params.bo);
  return result;
}

Tensor positionwise_ffn(const Tensor& x, const FeedForwardParams& params, double dropout_rate,
                        const ForwardMode& mode) {
  Tensor hidden = relu(params.inner.forward(x));
  if (mode.training && dropout_rate > 0.0) hidden = dropout(hidden, dropout_rate, true, *mode.rng);
  return params.outer.forward(hidden);
}

Tensor positional_encoding(std::size_t length, std::size_t d_model) {
  std::vector<double> table(length * d_model);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < d_model; ++i) {
      const double exponent = static_cast<double>(i - i % 2) / static_cast<double>(d_model);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
      table[pos * d_model + i] = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor::from_data({length, d_model}, std::move(table));
}

AttentionMask causal_mask(std::size_t length) {
  AttentionMask mask(length * length, false);
  for (std::size_t i = 0; i < length; ++i)
    for (std::size_t j = i + 1; j < length; ++j) mask[i * length + j] = true;
  return mask;
}

namespace {

Tensor maybe_dropout(const Tensor& x, double rate, const ForwardMode& mode) {
  if (!mode.training || rate == 0.0) return x;
  return dropout(x, rate, true, *mode.rng);
}

Tensor residual_norm(const Tensor& x, const Tensor& sublayer, const LayerNormParams& norm, double rate,
                     const ForwardMode& mode) {
  return layer_norm(add(x, maybe_dropout(sublayer, rate, mode)), norm.gain, norm.bias);
}

Tensor embed(const Tensor& table, const TokenIds& ids, const TransformerConfig& config, const ForwardMode& mode) {
  if (ids.size() > config.max_len) {
    throw ContractError("sequence of length " + std::to_string(ids.size()) + " exceeds max_len " +
                        std::to_string(config.max_len));
  }
  Tensor x = scale(embedding(table, ids), std::sqrt(static_cast<double>(config.d_model)));
  x = add(x, positional_encoding(ids.size(), config.d_model));
  return maybe_dropout(x, config.dropout, mode);
}

AttentionMask memory_mask(std::size_t queries, const std::vector<bool>& pad_mask) {
  AttentionMask mask(queries * pad_mask.size(), false);
  for (std::size_t i = 0; i < queries; ++i)
    for (std::size_t j = 0; j < pad_mask.size(); ++j) mask[i * pad_mask.size() + j] = pad_mask[j];
  return mask;
}

bool any_true(const std::vector<bool>& v) {
  for (bool b : v)
    if (b) return true;
  return false;
}

}  // namespace

EncodedSentence encode_sentence(const TokenIds& tokens, const TransformerParams& params,
                                const TransformerConfig& config, const ForwardMode& mode) {
  if (tokens.empty()) throw ContractError("encode_sentence: empty sentence");
  EncodedSentence out;
  out.token_ids = tokens;
  for (TokenId& id : out.token_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= config.vocab_src) id = kUnkId;
  }
  out.pad_mask.assign(tokens.size(), false);
  for (std::size_t i = 0; i < tokens.size(); ++i) out.pad_mask[i] = out.token_ids[i] == kPadId;

  Tensor x = embed(params.src_embedding, out.token_ids, config, mode);
  const bool padded = any_true(out.pad_mask);
  const AttentionMask mask = padded ? memory_mask(tokens.size(), out.pad_mask) : AttentionMask{};
  for (const auto& layer : params.encoder) {
    auto attn = multi_head_attention(x, x, x, layer.self_attn, padded ? &mask : nullptr);
    x = residual_norm(x, attn.output, layer.norm_attn, config.dropout, mode);
    x = residual_norm(x, positionwise_ffn(x, layer.ffn, config.dropout, mode), layer.norm_ffn, config.dropout, mode);
  }
  out.states = x;
  return out;
}

DecoderPass decoder_states(const TokenIds& prefix, const EncodedSentence& encoded, const TransformerParams& params,
                           const TransformerConfig& config, const ForwardMode& mode) {
  if (prefix.empty()) throw ContractError("decoder: empty prefix");
  TokenIds ids = prefix;
  for (TokenId& id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= config.vocab_tgt) id = kUnkId;
  }
  const std::size_t t = ids.size();
  const AttentionMask self_mask = causal_mask(t);
  const bool padded = any_true(encoded.pad_mask);
  const AttentionMask cross_mask = padded ? memory_mask(t, encoded.pad_mask) : AttentionMask{};

  Tensor x = embed(params.tgt_embedding, ids, config, mode);
  DecoderPass pass;
  for (const auto& layer : params.decoder) {
    auto self_attn = multi_head_attention(x, x, x, layer.self_attn, &self_mask);
    x = residual_norm(x, self_attn.output, layer.norm_self, config.dropout, mode);
    auto cross = multi_head_attention(x, encoded.states, encoded.states, layer.cross_attn,
                                      padded ? &cross_mask : nullptr);
    x = residual_norm(x, cross.output, layer.norm_cross, config.dropout, mode);
    x = residual_norm(x, positionwise_ffn(x, layer.ffn, config.dropout, mode), layer.norm_ffn, config.dropout, mode);
    pass.cross_weights = std::move(cross.head_weights);
  }
  pass.states = x;
  return pass;
}

DecodeStep decode_step(const TokenIds& prefix, const EncodedSentence& encoded, const TransformerParams& params,
                       const TransformerConfig& config, const ForwardMode& mode) {
  auto pass = decoder_states(prefix, encoded, params, config, mode);
  const std::size_t last = prefix.size() - 1;
  DecodeStep step;
  step.hidden = slice_rows(pass.states, last, 1);
  for (const Tensor& w : pass.cross_weights) step.cross_weights.push_back(slice_rows(w, last, 1));
  return step;
}

Tensor output_distribution(const Tensor& states, const TransformerParams& params) {
  return softmax_lastdim(params.output.forward(states));
}

CrossEntropyResult cross_entropy(const Tensor& probs, const TokenIds& gold, double label_smoothing) {
  if (probs.rank() != 2 || probs.rows() != gold.size()) {
    throw DimensionError("cross_entropy: " + std::to_string(gold.size()) + " gold tokens for distribution rows " +
                         shape_to_string(probs.shape()));
  }
  const std::size_t t = probs.rows(), v = probs.cols();
  const double eps = label_smoothing;
  const double off = eps / static_cast<double>(v);
  const auto P = probs.data();
  CrossEntropyResult result;
  double total = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    if (gold[i] < 0 || static_cast<std::size_t>(gold[i]) >= v) throw ContractError("cross_entropy: gold id out of range");
    const double pg = P[i * v + static_cast<std::size_t>(gold[i])];
    if (pg <= kProbabilityFloor) ++result.clamped;
    total -= (1.0 - eps) * std::log(std::max(pg, kProbabilityFloor));
    if (eps > 0.0) {
      for (std::size_t j = 0; j < v; ++j) total -= off * std::log(std::max(P[i * v + j], kProbabilityFloor));
    }
  }
  const double n = static_cast<double>(t);
  TokenIds targets = gold;
  result.loss = detail::make_result({1}, {total / n}, {probs}, "cross_entropy", [t, v, eps, off, n, targets](detail::Node& self) {
    detail::Node& parent = *self.parents[0];
    if (!parent.requires_grad) return;
    auto& g = parent.grad_buffer();
    const auto& P = parent.data;
    const double up = self.grad[0] / n;
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = 0; j < v; ++j) {
        const double p = P[i * v + j];
        if (p <= kProbabilityFloor) continue;
        double q = eps > 0.0 ? off : 0.0;
        if (static_cast<std::size_t>(targets[i]) == j) q += 1.0 - eps;
        if (q != 0.0) g[i * v + j] -= up * q / p;
      }
    }
  });
  return result;
}

}  // namespace copyhan
