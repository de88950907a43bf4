#include <algorithm>
#include <numeric>
#include <random>

#include "copyhan/corpus.hpp"
#include "copyhan/errors.hpp"

namespace copyhan {

std::string to_string(BatchMode mode) {
  switch (mode) {
    case BatchMode::Sentence: return "sentence";
    case BatchMode::TwoToTwo: return "two-to-two";
    case BatchMode::DocumentOrdered: return "document";
  }
  return "unknown";
}

BatchMode batch_mode_from_string(const std::string& s) {
  for (BatchMode m : {BatchMode::Sentence, BatchMode::TwoToTwo, BatchMode::DocumentOrdered})
    if (to_string(m) == s) return m;
  throw DataError("unknown batch mode '" + s + "'");
}

namespace {

TokenIds clip(TokenIds ids, std::size_t max_len, std::size_t& truncated) {
  if (ids.size() > max_len) {
    ids.resize(max_len);
    ++truncated;
  }
  return ids;
}

TokenIds joined(const TokenIds& prev, TokenId sep, const TokenIds& cur) {
  TokenIds out = prev;
  out.push_back(sep);
  out.insert(out.end(), cur.begin(), cur.end());
  return out;
}

}  // namespace

std::vector<Batch> make_batches(const DocumentCorpus& corpus, const Vocabulary& source_vocab,
                                const Vocabulary& target_vocab, const BatchOptions& options, BatchStats* stats) {
  if (options.max_len == 0) throw ContractError("max_len must be at least 1");
  if (options.max_tokens < options.max_len + 1) {
    throw ContractError("max_tokens (" + std::to_string(options.max_tokens) +
                        ") must fit one sentence of max_len plus EOS");
  }
  if (options.mode == BatchMode::TwoToTwo && (source_vocab.separator_id() < 0 || target_vocab.separator_id() < 0)) {
    throw ContractError("two-to-two batching needs a separator in both vocabularies");
  }

  BatchStats local;
  std::vector<Example> examples;
  for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
    const auto& doc = corpus.documents[d];
    TokenIds prev_src, prev_tgt;
    for (std::size_t s = 0; s < doc.sentences.size(); ++s) {
      TokenIds src = source_vocab.encode(doc.sentences[s].source);
      TokenIds tgt = target_vocab.encode(doc.sentences[s].target);
      Example ex;
      ex.document = d;
      ex.sentence = s;
      ex.document_start = s == 0;
      if (options.mode == BatchMode::TwoToTwo && s > 0) {
        ex.source = joined(prev_src, source_vocab.separator_id(), src);
        ex.target = joined(prev_tgt, target_vocab.separator_id(), tgt);
      } else {
        ex.source = src;
        ex.target = tgt;
      }
      ex.source = clip(std::move(ex.source), options.max_len, local.truncated);
      ex.target = clip(std::move(ex.target), options.max_len, local.truncated);
      prev_src = std::move(src);
      prev_tgt = std::move(tgt);
      examples.push_back(std::move(ex));
    }
  }
  local.examples = examples.size();

  std::mt19937_64 rng(options.seed);
  if (options.shuffle) {
    if (options.mode == BatchMode::DocumentOrdered) {
      std::vector<std::size_t> order(corpus.documents.size());
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      std::vector<std::vector<Example>> by_doc(corpus.documents.size());
      for (auto& ex : examples) by_doc[ex.document].push_back(std::move(ex));
      examples.clear();
      for (std::size_t d : order)
        for (auto& ex : by_doc[d]) examples.push_back(std::move(ex));
    } else {
      std::shuffle(examples.begin(), examples.end(), rng);
    }
  }

  std::vector<Batch> batches;
  Batch current;
  for (auto& ex : examples) {
    const std::size_t cost = ex.target.size() + 1;
    if (!current.examples.empty() && current.target_tokens + cost > options.max_tokens) {
      batches.push_back(std::move(current));
      current = Batch{};
    }
    current.target_tokens += cost;
    current.examples.push_back(std::move(ex));
  }
  if (!current.examples.empty()) batches.push_back(std::move(current));
  if (stats) *stats = local;
  return batches;
}

}  // namespace copyhan
