#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "copyhan/corpus.hpp"
#include "copyhan/errors.hpp"

namespace copyhan {

const std::vector<ConceptPair>& builtin_concepts() {
  static const std::vector<ConceptPair> table{
      {"tokei", "watch", "clock"},      {"hato", "pigeon", "dove"},      {"ryou", "amount", "quantity"},
      {"eiga", "film", "movie"},        {"kuruma", "car", "automobile"}, {"ie", "house", "home"},
      {"michi", "road", "street"},      {"isha", "doctor", "physician"}, {"kodomo", "child", "kid"},
      {"okurimono", "gift", "present"}, {"shigoto", "job", "work"},      {"mise", "shop", "store"},
  };
  return table;
}

namespace {

struct Person {
  const char* source;
  Tokens subject;
  Tokens possessive;
};

struct Word {
  const char* source;
  const char* target;
};

const std::vector<Person>& people() {
  static const std::vector<Person> p{
      {"tanaka", {"tanaka"}, {"tanaka", "'s"}},  {"sato", {"sato"}, {"sato", "'s"}},
      {"kanojo", {"she"}, {"her"}},              {"kare", {"he"}, {"his"}},
      {"watashi", {"i"}, {"my"}},                {"ane", {"my", "sister"}, {"my", "sister", "'s"}},
      {"chichi", {"my", "father"}, {"my", "father", "'s"}}, {"sensei", {"the", "teacher"}, {"the", "teacher", "'s"}},
  };
  return p;
}

const std::vector<Word>& adjectives() {
  static const std::vector<Word> a{{"atarashii", "new"}, {"furui", "old"},     {"ookii", "big"},
                                   {"chiisai", "small"}, {"takai", "expensive"}, {"yasui", "cheap"},
                                   {"kireina", "beautiful"}, {"akai", "red"}};
  return a;
}

const std::vector<Word>& verbs() {
  static const std::vector<Word> v{{"katta", "bought"},    {"mita", "saw"},     {"nakushita", "lost"},
                                   {"mitsuketa", "found"}, {"eranda", "chose"}, {"moratta", "received"}};
  return v;
}

// Cue words that pin the variant in the opening sentence.
const Word kCue[2] = {{"kinou", "yesterday"}, {"kyou", "today"}};

// rng() % n keeps corpora identical across standard libraries.
std::size_t draw(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

void append(Tokens& out, const Tokens& more) { out.insert(out.end(), more.begin(), more.end()); }

SentencePair make_sentence(const std::string& src_word, const std::string& tgt_word, std::mt19937_64& rng) {
  const Person& who = people()[draw(rng, people().size())];
  const Word& adj = adjectives()[draw(rng, adjectives().size())];
  const Word& verb = verbs()[draw(rng, verbs().size())];
  SentencePair p;
  switch (draw(rng, 4)) {
    case 0:  // S wa A C o V -> S V the A C
      p.source = {who.source, "wa", adj.source, src_word, "o", verb.source};
      p.target = who.subject;
      append(p.target, {verb.target, "the", adj.target, tgt_word});
      break;
    case 1:  // S wa C o V -> S V the C
      p.source = {who.source, "wa", src_word, "o", verb.source};
      p.target = who.subject;
      append(p.target, {verb.target, "the", tgt_word});
      break;
    case 2:  // sono C wa A desu -> the C is A
      p.source = {"sono", src_word, "wa", adj.source, "desu"};
      p.target = {"the", tgt_word, "is", adj.target};
      break;
    default:  // S no C wa A datta -> S's C was A
      p.source = {who.source, "no", src_word, "wa", adj.source, "datta"};
      p.target = who.possessive;
      append(p.target, {tgt_word, "was", adj.target});
      break;
  }
  return p;
}

}  // namespace

SynthCorpus generate_synthetic_cohesion_corpus(const SynthOptions& options) {
  const auto& table = builtin_concepts();
  if (options.n_concepts < 2) throw ContractError("synthetic corpus needs at least 2 concepts");
  if (options.n_concepts > table.size()) {
    throw ContractError("synthetic corpus supports at most " + std::to_string(table.size()) + " concepts");
  }
  if (options.doc_len < 2) throw ContractError("synthetic documents need at least 2 sentences");
  if (options.n_docs == 0) throw ContractError("synthetic corpus needs at least one document");

  SynthCorpus out;
  out.lexicon.assign(table.begin(), table.begin() + static_cast<std::ptrdiff_t>(options.n_concepts));

  // Balanced (concept, variant) assignment, then shuffled: every document's draw
  // is uniform, and each concept's variants stay within one of an even split.
  std::vector<std::pair<std::size_t, int>> plan;
  for (std::size_t i = 0; i < options.n_docs; ++i) {
    const std::size_t concept_index = i % options.n_concepts;
    const std::size_t round = i / options.n_concepts;
    plan.emplace_back(concept_index, static_cast<int>((round + concept_index) % 2));
  }
  std::mt19937_64 rng(options.seed);
  for (std::size_t i = plan.size(); i > 1; --i) std::swap(plan[i - 1], plan[draw(rng, i)]);

  for (std::size_t d = 0; d < options.n_docs; ++d) {
    const auto [k, variant] = plan[d];
    const ConceptPair& c = out.lexicon[k];
    const std::string& tgt_word = variant == 0 ? c.variant_a : c.variant_b;
    Document doc;
    doc.id = options.id_prefix + std::to_string(d + 1);
    for (std::size_t s = 0; s < options.doc_len; ++s) {
      SentencePair p = make_sentence(c.source, tgt_word, rng);
      if (s == 0 && options.first_sentence_cue) {
        p.source.insert(p.source.begin(), kCue[variant].source);
        p.target.insert(p.target.begin(), kCue[variant].target);
      }
      doc.sentences.push_back(std::move(p));
    }
    out.corpus.documents.push_back(std::move(doc));
    out.doc_concept.push_back(k);
    out.doc_variant.push_back(variant);
  }

  if (options.n_docs >= 200) {
    for (double r : variant_ratios(out)) {
      if (r < 0.4 || r > 0.6) {
        throw DataError("synthetic corpus variant balance check failed (ratio " + std::to_string(r) + ")");
      }
    }
  }
  return out;
}

std::vector<double> variant_ratios(const SynthCorpus& synth) {
  std::vector<std::size_t> total(synth.lexicon.size(), 0), a(synth.lexicon.size(), 0);
  for (std::size_t d = 0; d < synth.doc_concept.size(); ++d) {
    ++total[synth.doc_concept[d]];
    if (synth.doc_variant[d] == 0) ++a[synth.doc_concept[d]];
  }
  std::vector<double> out;
  for (std::size_t k = 0; k < total.size(); ++k)
    if (total[k] > 0) out.push_back(static_cast<double>(a[k]) / static_cast<double>(total[k]));
  return out;
}

void write_lexicon(const std::vector<ConceptPair>& lexicon, std::ostream& out) {
  for (const auto& c : lexicon) out << c.source << '\t' << c.variant_a << '\t' << c.variant_b << '\n';
}

std::vector<ConceptPair> read_lexicon(std::istream& in) {
  std::vector<ConceptPair> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    ConceptPair c;
    std::string extra;
    if (!std::getline(fields, c.source, '\t') || !std::getline(fields, c.variant_a, '\t') ||
        !std::getline(fields, c.variant_b, '\t') || std::getline(fields, extra, '\t') || c.variant_b.empty()) {
      throw ParseError("lexicon lines need exactly three tab-separated fields", n);
    }
    out.push_back(c);
  }
  if (out.empty()) throw DataError("lexicon is empty");
  return out;
}

void write_doc_concepts(const SynthCorpus& synth, std::ostream& out) {
  for (std::size_t d = 0; d < synth.doc_concept.size(); ++d)
    out << synth.corpus.documents[d].id << '\t' << synth.doc_concept[d] << '\n';
}

namespace {

std::vector<std::size_t> read_concept_lines(std::istream& in, const DocumentCorpus* corpus, std::size_t n_documents) {
  std::vector<std::size_t> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("expected 'doc_id<TAB>concept'", n);
    const std::string id = line.substr(0, tab);
    if (out.size() >= n_documents) throw ParseError("more concept lines than documents", n);
    if (corpus && corpus->documents[out.size()].id != id) {
      throw ParseError("document id '" + id + "' does not match the corpus order", n);
    }
    try {
      out.push_back(std::stoul(line.substr(tab + 1)));
    } catch (const std::exception&) {
      throw ParseError("concept index is not a number", n);
    }
  }
  if (out.size() != n_documents) {
    throw DataError("concept file lists " + std::to_string(out.size()) + " documents, corpus has " +
                    std::to_string(n_documents));
  }
  return out;
}

}  // namespace

std::vector<std::size_t> read_doc_concepts(std::istream& in, const DocumentCorpus& corpus) {
  return read_concept_lines(in, &corpus, corpus.documents.size());
}

std::vector<std::size_t> read_doc_concepts(std::istream& in, std::size_t n_documents) {
  return read_concept_lines(in, nullptr, n_documents);
}

}  // namespace copyhan
