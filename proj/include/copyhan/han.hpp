#pragma once

#include <cstddef>
#include <deque>
#include <vector>

#include "copyhan/tensor.hpp"
#include "copyhan/transformer.hpp"
#include "copyhan/types.hpp"

namespace copyhan {

// Hierarchical attention over cached context sentences.
struct HanParams {
  Linear word_query;      // f: h_t -> q_w
  Linear sentence_query;  // g: h_t -> q_s
  MultiHeadParams word_attn;
  MultiHeadParams sentence_attn;
  FeedForwardParams ffn;
  Tensor gate_hidden;   // W_h [d x d]
  Tensor gate_context;  // W_d [d x d]
};

struct CacheEntry {
  TokenIds token_ids;
  Tensor states;  // [token_ids.size() x d], detached
};

// Rolling caches of the previous n source sentences (D_x) and translations (D_y),
// oldest first. Cleared at every document boundary.
class ContextState {
 public:
  explicit ContextState(std::size_t n = 1);

  std::size_t capacity() const noexcept { return capacity_; }
  void push_source(CacheEntry entry);
  void push_target(CacheEntry entry);
  void clear();

  const std::deque<CacheEntry>& source() const noexcept { return source_; }
  const std::deque<CacheEntry>& target() const noexcept { return target_; }

 private:
  static void push(std::deque<CacheEntry>& cache, CacheEntry entry, std::size_t capacity);

  std::size_t capacity_;
  std::deque<CacheEntry> source_;
  std::deque<CacheEntry> target_;
};

// Attention weights of one HAN application, vectorised over query rows.
struct HanAttention {
  std::vector<Tensor> sentence_weights;           // [head] -> [rows x J]
  std::vector<std::vector<Tensor>> word_weights;  // [head][j] -> [rows x L_j]

  bool empty() const noexcept { return sentence_weights.empty(); }
};

// Plain-value view of the attention for a single query position.
struct AttentionTrace {
  std::vector<std::vector<double>> sentence_weights;            // [head][j]
  std::vector<std::vector<std::vector<double>>> word_weights;   // [head][j][i]
};

AttentionTrace trace_row(const HanAttention& attention, std::size_t row);

struct WordLevelResult {
  Tensor summary;                    // s^j, [rows x d]
  std::vector<Tensor> word_weights;  // per head [rows x L_j]
};

WordLevelResult word_level_context(const Tensor& hidden, const CacheEntry& entry, const HanParams& params);

struct SentenceLevelResult {
  Tensor context;                        // d_t, [rows x d]
  std::vector<Tensor> sentence_weights;  // per head [rows x J]
};

// Each query row attends over its own summaries (summaries[j] row r belongs to query r).
SentenceLevelResult sentence_level_context(const Tensor& hidden, const std::vector<Tensor>& summaries,
                                           const HanParams& params);

struct GateResult {
  Tensor integrated;  // lambda * h + (1 - lambda) * d
  Tensor gate;        // lambda
};

GateResult gate_integrate(const Tensor& hidden, const Tensor& context, const HanParams& params);

struct HanOutput {
  Tensor integrated;  // h~; identical handle to the input when the cache is empty
  Tensor context;     // d_t; undefined when skipped
  Tensor gate;        // lambda; undefined when skipped
  HanAttention attention;
  bool applied = false;
};

// Word level over every entry, sentence level over the summaries, then the gate.
// An empty cache returns the input rows unchanged.
HanOutput apply_han(const Tensor& hidden, const std::deque<CacheEntry>& cache, const HanParams& params);

}  // namespace copyhan
