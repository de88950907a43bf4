#include "copyhan/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "copyhan/errors.hpp"
#include "copyhan/ops.hpp"

namespace copyhan {

double normalized_score(const Hypothesis& h, double beta) {
  if (h.generated == 0) return 0.0;
  return h.log_prob / std::pow(static_cast<double>(h.generated), beta);
}

namespace {

// Indices of the k largest entries, larger value first, lower index on ties.
std::vector<std::size_t> top_k(const std::vector<double>& values, std::size_t k) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) { return values[a] > values[b] || (values[a] == values[b] && a < b); });
  idx.resize(k);
  return idx;
}

}  // namespace

std::vector<Hypothesis> beam_step(const std::vector<Hypothesis>& beam, const StepScorer& scorer, std::size_t width,
                                  double beta, TokenId eos) {
  if (width == 0) throw ContractError("beam width must be at least 1");
  std::vector<Hypothesis> candidates;
  for (const auto& h : beam) {
    if (h.finished) {
      candidates.push_back(h);
      continue;
    }
    const auto log_probs = scorer(h.tokens);
    for (std::size_t v : top_k(log_probs, width)) {
      Hypothesis next = h;
      next.tokens.push_back(static_cast<TokenId>(v));
      next.log_prob += log_probs[v];
      next.generated += 1;
      next.finished = static_cast<TokenId>(v) == eos;
      candidates.push_back(std::move(next));
    }
  }
  std::vector<double> scores;
  scores.reserve(candidates.size());
  for (const auto& c : candidates) scores.push_back(normalized_score(c, beta));
  std::vector<Hypothesis> out;
  for (std::size_t i : top_k(scores, width)) out.push_back(std::move(candidates[i]));
  return out;
}

std::size_t max_output_length(std::size_t source_length) { return 2 * source_length + 10; }

Hypothesis beam_search(const StepScorer& scorer, const TokenIds& prefix, std::size_t max_new_tokens,
                       const SearchConfig& config, TokenId eos) {
  if (prefix.empty()) throw ContractError("search needs a non-empty prefix");
  std::vector<Hypothesis> beam{Hypothesis{prefix, 0.0, false, 0}};
  for (std::size_t step = 0; step < max_new_tokens; ++step) {
    if (std::all_of(beam.begin(), beam.end(), [](const Hypothesis& h) { return h.finished; })) break;
    beam = beam_step(beam, scorer, config.beam_width, config.length_penalty, eos);
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < beam.size(); ++i)
    if (normalized_score(beam[i], config.length_penalty) > normalized_score(beam[best], config.length_penalty)) best = i;
  return beam[best];
}

Hypothesis greedy_search(const StepScorer& scorer, const TokenIds& prefix, std::size_t max_new_tokens, TokenId eos) {
  if (prefix.empty()) throw ContractError("search needs a non-empty prefix");
  Hypothesis h{prefix, 0.0, false, 0};
  while (!h.finished && h.generated < max_new_tokens) {
    const auto log_probs = scorer(h.tokens);
    const std::size_t v = top_k(log_probs, 1).front();
    h.tokens.push_back(static_cast<TokenId>(v));
    h.log_prob += log_probs[v];
    h.generated += 1;
    h.finished = static_cast<TokenId>(v) == eos;
  }
  return h;
}

SentenceTranslation translate_sentence(const Model& model, const EncodedSentence& encoded,
                                       const ContextState& context, const TokenIds& forced_prefix,
                                       std::size_t max_new_tokens, const TranslateOptions& options) {
  NoGradGuard no_grad;
  // Decoder positions are bounded by the positional table.
  const std::size_t limit = model.config().transformer.max_len;
  max_new_tokens = forced_prefix.size() >= limit ? 0 : std::min(max_new_tokens, limit - forced_prefix.size());
  DecodeOptions dopts;
  dopts.force_copy_off = options.force_copy_off;
  const StepScorer scorer = [&](const TokenIds& prefix) {
    const auto out = model.decode(prefix, encoded, context, ForwardMode::eval(), dopts);
    const auto row = out.p_out.row_values(prefix.size() - 1);
    std::vector<double> lp(row.size());
    for (std::size_t v = 0; v < row.size(); ++v) lp[v] = std::log(std::max(row[v], kProbabilityFloor));
    return lp;
  };
  const Hypothesis best = options.search.beam_width <= 1
                              ? greedy_search(scorer, forced_prefix, max_new_tokens)
                              : beam_search(scorer, forced_prefix, max_new_tokens, options.search);

  SentenceTranslation t;
  t.log_prob = best.log_prob;
  t.finished = best.finished;
  const auto first = best.tokens.begin() + static_cast<std::ptrdiff_t>(forced_prefix.size());
  t.output.assign(first, best.finished ? best.tokens.end() - 1 : best.tokens.end());

  if (options.keep_traces && best.generated > 0) {
    // Causal decoder: one pass over the chosen sequence reproduces every search-time row.
    const TokenIds inputs(best.tokens.begin(), best.tokens.end() - 1);
    const auto out = model.decode(inputs, encoded, context, ForwardMode::eval(), dopts);
    for (std::size_t i = 0; i < best.generated; ++i)
      t.steps.push_back(model.step_trace(out, forced_prefix.size() - 1 + i));
  }
  return t;
}

void update_context(ContextState& context, const Model& model, const EncoderOutput& encoded, const TokenIds& output) {
  NoGradGuard no_grad;
  if (uses_source_context(model.variant())) {
    context.push_source({encoded.encoded.token_ids, encoded.base_states.detach()});
  }
  if (uses_target_context(model.variant()) && !output.empty()) {
    context.push_target(model.target_cache_entry(output, encoded.encoded));
  }
}

DocumentTranslation translate_document(const Model& model, const std::vector<TokenIds>& sources,
                                       const TranslateOptions& options) {
  NoGradGuard no_grad;
  if (options.two_to_two && (options.source_separator < 0 || options.target_separator < 0)) {
    throw ContractError("two-to-two translation needs separator ids on both sides");
  }
  DocumentTranslation doc;
  ContextState context(model.config().n_context);
  for (std::size_t i = 0; i < sources.size(); ++i) {
    doc.source_cache_sizes.push_back(context.source().size());
    doc.target_cache_sizes.push_back(context.target().size());
    TokenIds source = sources[i];
    TokenIds prefix{kBosId};
    if (options.two_to_two && i > 0) {
      source = sources[i - 1];
      source.push_back(options.source_separator);
      source.insert(source.end(), sources[i].begin(), sources[i].end());
      prefix.insert(prefix.end(), doc.outputs.back().begin(), doc.outputs.back().end());
      prefix.push_back(options.target_separator);
    }
    const auto enc = model.encode(source, context, ForwardMode::eval());
    auto t = translate_sentence(model, enc.encoded, context, prefix, max_output_length(sources[i].size()), options);
    update_context(context, model, enc, t.output);
    doc.outputs.push_back(std::move(t.output));
    doc.traces.push_back(std::move(t.steps));
  }
  return doc;
}

namespace {

void write_top(std::ostream& out, const std::vector<double>& dist, const Vocabulary& vocab) {
  bool first = true;
  for (std::size_t v : top_k(dist, 5)) {
    if (!first) out << ',';
    first = false;
    const std::string tok = v < vocab.size() ? vocab.token(static_cast<TokenId>(v)) : std::to_string(v);
    out << tok << ':' << dist[v];
  }
}

}  // namespace

void write_copy_trace(std::ostream& out, std::size_t doc, std::size_t sentence,
                      const std::vector<DecoderStepTrace>& steps, const Vocabulary& target_vocab) {
  out << "# doc " << doc << " sentence " << sentence << '\n';
  for (std::size_t s = 0; s < steps.size(); ++s) {
    const auto& st = steps[s];
    out << s << '\t' << st.p_copy << '\t';
    write_top(out, st.p_vocab, target_vocab);
    out << '\t';
    write_top(out, st.alpha, target_vocab);
    out << '\t';
    write_top(out, st.p_out, target_vocab);
    out << '\n';
  }
}

}  // namespace copyhan
