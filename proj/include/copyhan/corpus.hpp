#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "copyhan/types.hpp"

namespace copyhan {

using Tokens = std::vector<std::string>;

struct SentencePair {
  Tokens source;
  Tokens target;
};

struct Document {
  std::string id;
  std::vector<SentencePair> sentences;
};

// Aligned, pre-tokenised documents. Context never crosses a document.
struct DocumentCorpus {
  std::vector<Document> documents;

  std::size_t sentence_count() const;
  // Throws DataError naming the first document that breaks an invariant.
  void validate() const;
};

// One sentence per line, space-separated tokens, a blank line between
// documents. CRLF is accepted. Misalignment raises ParseError with the line.
DocumentCorpus parse_corpus(std::istream& source, std::istream& target, const std::string& origin = "");
DocumentCorpus load_corpus(const std::string& source_path, const std::string& target_path);
// A single document-formatted file; both sides hold its sentences.
DocumentCorpus load_one_side(const std::string& path);

void write_corpus_side(const DocumentCorpus& corpus, bool target_side, std::ostream& out);
void write_corpus(const DocumentCorpus& corpus, const std::string& source_path, const std::string& target_path);

// "doc_id\tstart_line\tend_line" per document, 1-based inclusive line numbers
// in the files written by write_corpus.
void write_manifest(const DocumentCorpus& corpus, std::ostream& out);
void write_manifest(const DocumentCorpus& corpus, const std::string& path);

enum class Side { Source, Target };

inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kUnkToken = "<unk>";
inline constexpr const char* kBosToken = "<s>";
inline constexpr const char* kEosToken = "</s>";
inline constexpr const char* kSepToken = "<sep>";

class Vocabulary {
 public:
  Vocabulary();

  // Most frequent first, ties in byte order, after the four reserved ids.
  // `max_size` counts the reserved entries; the separator, when requested,
  // takes the last slot.
  static Vocabulary build(const DocumentCorpus& corpus, Side side, std::size_t max_size, std::size_t min_freq = 1,
                          bool with_separator = false);
  static Vocabulary from_tokens(const std::vector<std::string>& tokens_in_id_order);

  std::size_t size() const noexcept { return tokens_.size(); }
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  // Unknown tokens map to the UNK id.
  TokenId id(const std::string& token) const;
  const std::string& token(TokenId id) const;
  TokenId separator_id() const noexcept { return separator_; }
  std::size_t min_freq() const noexcept { return min_freq_; }

  TokenIds encode(const Tokens& tokens) const;
  // PAD, BOS, EOS and the separator are dropped unless `keep_special`; UNK stays.
  Tokens decode(const TokenIds& ids, bool keep_special = false) const;

  void save(std::ostream& out) const;
  void save(const std::string& path) const;
  static Vocabulary load(std::istream& in);
  static Vocabulary load(const std::string& path);

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  TokenId separator_ = -1;
  std::size_t min_freq_ = 1;
};

enum class BatchMode { Sentence, TwoToTwo, DocumentOrdered };

std::string to_string(BatchMode mode);
BatchMode batch_mode_from_string(const std::string& s);

struct Example {
  TokenIds source;
  TokenIds target;  // without BOS/EOS
  std::size_t document = 0;
  std::size_t sentence = 0;
  bool document_start = false;
};

struct Batch {
  std::vector<Example> examples;
  std::size_t target_tokens = 0;  // sum of target lengths plus one EOS each
};

struct BatchOptions {
  BatchMode mode = BatchMode::Sentence;
  std::size_t max_tokens = 1024;
  std::size_t max_len = 100;
  bool shuffle = true;  // examples (sentence, two-to-two) or whole documents (document-ordered)
  std::uint64_t seed = 0;
};

struct BatchStats {
  std::size_t examples = 0;
  std::size_t truncated = 0;
};

// Target-token budgeted batches. Document-ordered batches keep every document's
// sentences contiguous and in order, with `document_start` on the first one.
std::vector<Batch> make_batches(const DocumentCorpus& corpus, const Vocabulary& source_vocab,
                                const Vocabulary& target_vocab, const BatchOptions& options,
                                BatchStats* stats = nullptr);

// Synthetic corpus in which one ambiguous source word per document has two
// equally likely target renderings, and the reference keeps one of them
// throughout the document.
struct ConceptPair {
  std::string source;
  std::string variant_a;
  std::string variant_b;
};

const std::vector<ConceptPair>& builtin_concepts();

struct SynthOptions {
  std::size_t n_docs = 200;
  std::size_t doc_len = 4;
  std::size_t n_concepts = 10;
  std::uint64_t seed = 1;
  // The first sentence of each document carries a source word that names the
  // variant; later sentences do not.
  bool first_sentence_cue = true;
  std::string id_prefix = "doc";
};

struct SynthCorpus {
  DocumentCorpus corpus;
  std::vector<ConceptPair> lexicon;
  std::vector<std::size_t> doc_concept;  // index into lexicon
  std::vector<int> doc_variant;          // 0 = a, 1 = b
};

SynthCorpus generate_synthetic_cohesion_corpus(const SynthOptions& options);

// Per-concept share of variant a; one entry per concept that occurs.
std::vector<double> variant_ratios(const SynthCorpus& synth);

// Lexicon as "source\tvariant_a\tvariant_b" lines, and per-document concept
// ids as "doc_id\tconcept_index" lines.
void write_lexicon(const std::vector<ConceptPair>& lexicon, std::ostream& out);
std::vector<ConceptPair> read_lexicon(std::istream& in);
void write_doc_concepts(const SynthCorpus& synth, std::ostream& out);
std::vector<std::size_t> read_doc_concepts(std::istream& in, const DocumentCorpus& corpus);
// Positional: ids are not checked, only the document count (text files carry no ids).
std::vector<std::size_t> read_doc_concepts(std::istream& in, std::size_t n_documents);

}  // namespace copyhan
