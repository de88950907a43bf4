#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "copyhan/corpus.hpp"
#include "copyhan/model.hpp"

namespace copyhan {

// Next-token log-probabilities for a BOS-initial prefix.
using StepScorer = std::function<std::vector<double>(const TokenIds& prefix)>;

struct Hypothesis {
  TokenIds tokens;  // starts with the forced prefix (BOS first)
  double log_prob = 0.0;
  bool finished = false;
  std::size_t generated = 0;  // tokens appended after the forced prefix, EOS included
};

// log_prob / generated^beta; an empty hypothesis scores 0.
double normalized_score(const Hypothesis& h, double beta);

// One expansion round: every live hypothesis proposes its top `width` tokens,
// finished ones carry over, and the best `width` by normalized score survive
// (ties keep the earlier hypothesis, then the lower token id).
std::vector<Hypothesis> beam_step(const std::vector<Hypothesis>& beam, const StepScorer& scorer, std::size_t width,
                                  double beta, TokenId eos);

struct SearchConfig {
  std::size_t beam_width = 1;
  double length_penalty = 1.0;  // beta
};

// Output length guard: 2 * source length + 10.
std::size_t max_output_length(std::size_t source_length);

// Returns the best final hypothesis. Stops when every hypothesis is finished or
// `max_new_tokens` have been generated.
Hypothesis beam_search(const StepScorer& scorer, const TokenIds& prefix, std::size_t max_new_tokens,
                       const SearchConfig& config, TokenId eos = kEosId);
// Argmax at every step, lowest id on ties.
Hypothesis greedy_search(const StepScorer& scorer, const TokenIds& prefix, std::size_t max_new_tokens,
                         TokenId eos = kEosId);

struct SentenceTranslation {
  TokenIds output;  // generated tokens, without forced prefix and EOS
  double log_prob = 0.0;
  bool finished = false;
  std::vector<DecoderStepTrace> steps;  // one per generated token when traces are kept
};

struct TranslateOptions {
  SearchConfig search;
  bool two_to_two = false;  // sentence model over previous ⊕ SEP ⊕ current
  TokenId source_separator = -1;
  TokenId target_separator = -1;
  bool keep_traces = false;
  bool force_copy_off = false;
};

// Translates one sentence against the current caches.
SentenceTranslation translate_sentence(const Model& model, const EncodedSentence& encoded,
                                       const ContextState& context, const TokenIds& forced_prefix,
                                       std::size_t max_new_tokens, const TranslateOptions& options);

// Appends the source encoding and, for a non-empty output, the teacher-forced
// decoder states of that output. Only the caches the variant reads are filled.
void update_context(ContextState& context, const Model& model, const EncoderOutput& encoded, const TokenIds& output);

struct DocumentTranslation {
  std::vector<TokenIds> outputs;
  std::vector<std::vector<DecoderStepTrace>> traces;
  std::vector<std::size_t> source_cache_sizes;  // before each sentence
  std::vector<std::size_t> target_cache_sizes;
};

// Sentence by sentence with fresh caches, feeding the model's own outputs back as D_y.
DocumentTranslation translate_document(const Model& model, const std::vector<TokenIds>& sources,
                                       const TranslateOptions& options);

// "# doc N sentence M" header, then per step: step, p_copy, and top-5
// "token:prob" lists for P_vocab, alpha and P_w, tab separated.
void write_copy_trace(std::ostream& out, std::size_t doc, std::size_t sentence,
                      const std::vector<DecoderStepTrace>& steps, const Vocabulary& target_vocab);

}  // namespace copyhan
