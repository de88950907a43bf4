#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "copyhan/corpus.hpp"

namespace copyhan {

// One document as tokenised sentences.
using TokenDocument = std::vector<Tokens>;

struct BleuResult {
  double score = 0.0;  // 0..100
  std::array<double, 4> precisions{};
  std::array<std::size_t, 4> matches{};
  std::array<std::size_t, 4> totals{};
  double brevity_penalty = 0.0;
  std::size_t candidate_length = 0;
  std::size_t reference_length = 0;
  std::vector<std::string> warnings;
};

// Corpus BLEU-4, single reference, clipped n-gram counts, no smoothing.
BleuResult bleu4(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references);
// Sentence counts must agree document by document.
BleuResult bleu4(const std::vector<TokenDocument>& candidates, const std::vector<TokenDocument>& references);

// Function words, punctuation and spelled-out numerals. Tokens consisting only
// of digits and ASCII punctuation are stopwords by rule.
class StopwordList {
 public:
  static StopwordList parse(const std::string& text, std::string version);
  // The versioned list compiled into the library.
  static const StopwordList& shipped();

  bool contains(const std::string& token) const;
  const std::string& version() const noexcept { return version_; }
  const std::string& sha256() const noexcept { return sha256_; }
  std::size_t size() const noexcept { return words_.size(); }

 private:
  std::unordered_set<std::string> words_;
  std::string version_;
  std::string sha256_;
};

std::string sha256_hex(const std::string& bytes);

Tokens content_words(const Tokens& sentence, const StopwordList& stopwords = StopwordList::shipped());

// Suffix stripper, applied to lowercase ASCII words, first matching rule per step:
//  1. possessive: drop trailing "'s" or "'"
//  2. plural: sses -> ss, ies -> i, (s|x|z|ch|sh)es -> drop "es", ss/us/is kept, s -> drop
//  3. ing / ed dropped when a vowel remains; a doubled final consonant
//     (other than l, s, z) is then undoubled
//  4. ly dropped
//  5. final y -> i, then a final e is dropped
// No step leaves fewer than three characters; shorter words pass unchanged.
std::string stem(const std::string& word);

struct LcReport {
  std::vector<std::optional<double>> per_document;  // nullopt for excluded documents
  std::size_t content_words = 0;
  std::size_t devices = 0;
  double lc = 0.0;  // 100 * devices / content_words over included documents
  std::vector<std::string> warnings;
};

// Stem-repetition lexical cohesion: a content word is a device when its stem
// matches an earlier content word's stem in the same document. Every
// repeated occurrence counts.
LcReport lc_score(const std::vector<TokenDocument>& documents,
                  const StopwordList& stopwords = StopwordList::shipped());

struct ConsistencyReport {
  double rate = 0.0;
  std::size_t matched = 0;
  std::size_t compared = 0;
  std::size_t dropped = 0;              // follow-up sentences with neither variant
  std::size_t unanchored_documents = 0; // first sentence had neither variant
};

// Per document, the first variant of the document's concept found in sentence 1
// is the anchor; each later sentence counts by the first variant it contains.
ConsistencyReport consistency_rate(const std::vector<TokenDocument>& candidates,
                                   const std::vector<ConceptPair>& lexicon,
                                   const std::vector<std::size_t>& doc_concepts);

std::vector<TokenDocument> token_documents(const DocumentCorpus& corpus, Side side);

// Document-formatted text: a sentence per line, a blank line between documents.
// An empty sentence is written as the UNK token so the layout survives.
void write_token_documents(const std::vector<TokenDocument>& docs, std::ostream& out);
void write_token_documents(const std::vector<TokenDocument>& docs, const std::string& path);
std::vector<TokenDocument> load_token_documents(const std::string& path);

struct SystemScores {
  std::string name;
  BleuResult bleu;
  LcReport lc;
  std::optional<ConsistencyReport> consistency;
};

// Fixed-width table: system, BLEU, LC, LC minus reference, consistency.
void write_report_table(std::ostream& out, const std::vector<SystemScores>& systems, const LcReport& reference);
// One "key=value ..." line per system, plus one for the reference.
void write_report_records(std::ostream& out, const std::vector<SystemScores>& systems, const LcReport& reference,
                          const StopwordList& stopwords = StopwordList::shipped());

}  // namespace copyhan
