#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "copyhan/corpus.hpp"
#include "copyhan/errors.hpp"

using namespace copyhan;

namespace {

DocumentCorpus parse(const std::string& src, const std::string& tgt) {
  std::istringstream s(src), t(tgt);
  return parse_corpus(s, t);
}

std::string side_text(const DocumentCorpus& c, bool target) {
  std::ostringstream out;
  write_corpus_side(c, target, out);
  return out.str();
}

const char* kSrc = "a b\nc d e\n\nf\ng h\ni\n";
const char* kTgt = "A B\nC D\n\nF\nG\nI J\n";

DocumentCorpus counted(std::initializer_list<std::pair<const char*, int>> counts) {
  DocumentCorpus c;
  Document d;
  d.id = "doc1";
  for (auto [tok, n] : counts)
    for (int i = 0; i < n; ++i) d.sentences.push_back({{tok}, {tok}});
  c.documents.push_back(d);
  return c;
}

}  // namespace

TEST(LoadCorpus, DocumentsFollowBlankLines) {
  const auto c = parse(kSrc, kTgt);
  ASSERT_EQ(c.documents.size(), 2u);
  EXPECT_EQ(c.documents[0].sentences.size(), 2u);
  EXPECT_EQ(c.documents[1].sentences.size(), 3u);
  EXPECT_EQ(c.documents[0].sentences[1].source, (Tokens{"c", "d", "e"}));
  EXPECT_EQ(c.documents[1].sentences[2].target, (Tokens{"I", "J"}));
  EXPECT_EQ(c.documents[1].id, "doc2");
  EXPECT_EQ(c.sentence_count(), 5u);
}

TEST(LoadCorpus, BoundaryMismatchNamesTheLine) {
  const std::string src = "a\nb\n\nc\nd\ne\nf\ng\n";
  const std::string tgt = "A\nB\n\nC\nD\nE\n\nG\n";
  try {
    parse(src, tgt);
    FAIL() << "accepted misaligned boundary";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 7u);
    EXPECT_NE(std::string(e.what()).find("line 7"), std::string::npos);
  }
}

TEST(LoadCorpus, LineCountMismatchIsAParseError) {
  EXPECT_THROW(parse("a\nb\nc\n", "A\nB\n"), ParseError);
}

TEST(LoadCorpus, CrlfMatchesLf) {
  std::string src = kSrc, tgt = kTgt;
  auto crlf = [](std::string s) {
    std::string out;
    for (char ch : s) {
      if (ch == '\n') out += '\r';
      out += ch;
    }
    return out;
  };
  const auto a = parse(kSrc, kTgt);
  const auto b = parse(crlf(src), crlf(tgt));
  EXPECT_EQ(side_text(a, false), side_text(b, false));
  EXPECT_EQ(side_text(a, true), side_text(b, true));
}

TEST(LoadCorpus, EmptyAndInvalidInputsFail) {
  EXPECT_THROW(parse("", ""), DataError);
  EXPECT_THROW(parse("\n\n", "\n\n"), DataError);
  EXPECT_THROW(parse("ok\n\xff\xfe\n", "ok\nfine\n"), ParseError);
  EXPECT_THROW(load_corpus("/nonexistent/a", "/nonexistent/b"), DataError);
}

TEST(LoadCorpus, RoundTripIsBitwiseStable) {
  const auto a = parse("x  y\n\n\nz\r\n", "X\tY\n\n\nZ\r\n");
  const auto dir = std::filesystem::temp_directory_path() / "copyhan_corpus_rt";
  std::filesystem::create_directories(dir);
  const auto s1 = (dir / "a.src").string(), t1 = (dir / "a.tgt").string();
  const auto s2 = (dir / "b.src").string(), t2 = (dir / "b.tgt").string();
  write_corpus(a, s1, t1);
  const auto b = load_corpus(s1, t1);
  write_corpus(b, s2, t2);
  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  EXPECT_EQ(slurp(s1), slurp(s2));
  EXPECT_EQ(slurp(t1), slurp(t2));
  EXPECT_EQ(slurp(s1), "x y\n\nz\n");
  std::filesystem::remove_all(dir);
}

TEST(LoadCorpus, ManifestListsLineRanges) {
  const auto c = parse(kSrc, kTgt);
  std::ostringstream out;
  write_manifest(c, out);
  EXPECT_EQ(out.str(), "doc1\t1\t2\ndoc2\t4\t6\n");
}

TEST(Vocab, FrequencyOrderAfterReservedIds) {
  const auto v = Vocabulary::build(counted({{"b", 1}, {"a", 3}}), Side::Source, 10);
  EXPECT_EQ(v.id("a"), 4);
  EXPECT_EQ(v.id("b"), 5);
  EXPECT_EQ(v.size(), 6u);
  EXPECT_EQ(v.token(kPadId), kPadToken);
  EXPECT_EQ(v.token(kEosId), kEosToken);
}

TEST(Vocab, CapKeepsMostFrequent) {
  const auto v = Vocabulary::build(counted({{"b", 1}, {"a", 3}, {"c", 2}}), Side::Source, 5);
  EXPECT_EQ(v.size(), 5u);
  EXPECT_EQ(v.id("a"), 4);
  EXPECT_EQ(v.id("c"), kUnkId);
  EXPECT_THROW(Vocabulary::build(counted({{"a", 1}}), Side::Source, 4), ContractError);
}

TEST(Vocab, TiesBreakLexicographically) {
  const auto v = Vocabulary::build(counted({{"b", 2}, {"a", 2}}), Side::Target, 10);
  EXPECT_EQ(v.id("a"), 4);
  EXPECT_EQ(v.id("b"), 5);
}

TEST(Vocab, MinimumFrequencyAndSeparator) {
  const auto v = Vocabulary::build(counted({{"a", 3}, {"b", 1}}), Side::Source, 10, 2, true);
  EXPECT_EQ(v.id("a"), 4);
  EXPECT_EQ(v.id("b"), kUnkId);
  EXPECT_EQ(v.separator_id(), 5);
  EXPECT_EQ(v.token(5), kSepToken);
  const auto capped = Vocabulary::build(counted({{"a", 3}, {"b", 2}}), Side::Source, 6, 1, true);
  EXPECT_EQ(capped.size(), 6u);
  EXPECT_EQ(capped.separator_id(), 5);
}

TEST(Vocab, NumericalisationInvertsForKnownTokens) {
  const auto c = parse(kSrc, kTgt);
  const auto v = Vocabulary::build(c, Side::Target, 100);
  for (const auto& doc : c.documents)
    for (const auto& p : doc.sentences) EXPECT_EQ(v.decode(v.encode(p.target)), p.target);
  EXPECT_EQ(v.encode({"A", "nope"}), (TokenIds{v.id("A"), kUnkId}));
  EXPECT_EQ(v.decode({kBosId, v.id("A"), kUnkId, kEosId}), (Tokens{"A", kUnkToken}));
}

TEST(Vocab, SaveLoadRoundTrip) {
  const auto v = Vocabulary::build(parse(kSrc, kTgt), Side::Source, 100, 1, true);
  std::stringstream buf;
  v.save(buf);
  const auto w = Vocabulary::load(buf);
  ASSERT_EQ(w.size(), v.size());
  for (TokenId i = 0; i < static_cast<TokenId>(v.size()); ++i) EXPECT_EQ(w.token(i), v.token(i));
  EXPECT_EQ(w.separator_id(), v.separator_id());
  std::istringstream bad("x\ny\n");
  EXPECT_THROW(Vocabulary::load(bad), DataError);
}

class Batching : public ::testing::Test {
 protected:
  DocumentCorpus corpus = parse(kSrc, kTgt);
  Vocabulary src = Vocabulary::build(corpus, Side::Source, 100, 1, true);
  Vocabulary tgt = Vocabulary::build(corpus, Side::Target, 100, 1, true);
};

TEST_F(Batching, TwoToTwoConcatenatesThePreviousSentence) {
  BatchOptions o;
  o.mode = BatchMode::TwoToTwo;
  o.shuffle = false;
  const auto batches = make_batches(corpus, src, tgt, o);
  ASSERT_EQ(batches.size(), 1u);
  const auto& ex = batches[0].examples;
  ASSERT_EQ(ex.size(), 5u);
  EXPECT_EQ(tgt.decode(ex[0].target, true), (Tokens{"A", "B"}));
  EXPECT_EQ(tgt.decode(ex[1].target, true), (Tokens{"A", "B", kSepToken, "C", "D"}));
  EXPECT_EQ(src.decode(ex[1].source, true), (Tokens{"a", "b", kSepToken, "c", "d", "e"}));
  EXPECT_EQ(tgt.decode(ex[2].target, true), (Tokens{"F"}));  // a new document starts unconcatenated
}

TEST_F(Batching, DocumentOrderKeepsSentencesAndFlagsStarts) {
  BatchOptions o;
  o.mode = BatchMode::DocumentOrdered;
  o.seed = 5;
  std::vector<Example> all;
  for (const auto& b : make_batches(corpus, src, tgt, o))
    for (const auto& e : b.examples) all.push_back(e);
  ASSERT_EQ(all.size(), 5u);
  for (std::size_t i = 0; i < all.size(); ++i) {
    EXPECT_EQ(all[i].document_start, all[i].sentence == 0);
    if (i > 0 && !all[i].document_start) {
      EXPECT_EQ(all[i].document, all[i - 1].document);
      EXPECT_EQ(all[i].sentence, all[i - 1].sentence + 1);
    }
  }
}

TEST_F(Batching, TruncationIsCountedAndBudgetValidated) {
  BatchOptions o;
  o.max_len = 2;
  o.max_tokens = 3;
  BatchStats stats;
  const auto batches = make_batches(corpus, src, tgt, o, &stats);
  EXPECT_EQ(stats.examples, 5u);
  EXPECT_EQ(stats.truncated, 1u);  // "c d e"
  for (const auto& b : batches) EXPECT_LE(b.target_tokens, 3u);
  o.max_tokens = 2;
  EXPECT_THROW(make_batches(corpus, src, tgt, o), ContractError);
  Vocabulary plain = Vocabulary::build(corpus, Side::Target, 100);
  o.max_tokens = 10;
  o.mode = BatchMode::TwoToTwo;
  EXPECT_THROW(make_batches(corpus, src, plain, o), ContractError);
}

TEST(BatchingBudget, NoBatchExceedsTheTokenBudget) {
  SynthOptions so;
  so.n_docs = 60;
  const auto synth = generate_synthetic_cohesion_corpus(so);
  const auto src = Vocabulary::build(synth.corpus, Side::Source, 1000, 1, true);
  const auto tgt = Vocabulary::build(synth.corpus, Side::Target, 1000, 1, true);
  for (BatchMode mode : {BatchMode::Sentence, BatchMode::TwoToTwo, BatchMode::DocumentOrdered}) {
    for (std::size_t budget : {20u, 64u, 333u}) {
      BatchOptions o;
      o.mode = mode;
      o.max_tokens = budget;
      o.max_len = 19;
      o.seed = budget;
      std::size_t seen = 0;
      for (const auto& b : make_batches(synth.corpus, src, tgt, o)) {
        std::size_t tokens = 0;
        for (const auto& e : b.examples) tokens += e.target.size() + 1;
        EXPECT_EQ(tokens, b.target_tokens);
        EXPECT_LE(tokens, budget);
        seen += b.examples.size();
      }
      EXPECT_EQ(seen, synth.corpus.sentence_count());
    }
  }
}

TEST(BatchingBudget, ShuffleIsSeeded) {
  SynthOptions so;
  so.n_docs = 20;
  const auto synth = generate_synthetic_cohesion_corpus(so);
  const auto src = Vocabulary::build(synth.corpus, Side::Source, 1000);
  const auto tgt = Vocabulary::build(synth.corpus, Side::Target, 1000);
  auto order = [&](std::uint64_t seed) {
    BatchOptions o;
    o.seed = seed;
    std::vector<std::pair<std::size_t, std::size_t>> ids;
    for (const auto& b : make_batches(synth.corpus, src, tgt, o))
      for (const auto& e : b.examples) ids.emplace_back(e.document, e.sentence);
    return ids;
  };
  EXPECT_EQ(order(3), order(3));
  EXPECT_NE(order(3), order(4));
}

TEST(Synthetic, SameSeedSameCorpus) {
  SynthOptions o;
  o.seed = 77;
  const auto a = generate_synthetic_cohesion_corpus(o);
  const auto b = generate_synthetic_cohesion_corpus(o);
  EXPECT_EQ(side_text(a.corpus, false), side_text(b.corpus, false));
  EXPECT_EQ(side_text(a.corpus, true), side_text(b.corpus, true));
  o.seed = 78;
  EXPECT_NE(side_text(generate_synthetic_cohesion_corpus(o).corpus, true), side_text(a.corpus, true));
}

TEST(Synthetic, EachDocumentUsesExactlyOneVariant) {
  SynthOptions o;
  o.n_docs = 120;
  const auto s = generate_synthetic_cohesion_corpus(o);
  ASSERT_EQ(s.lexicon.size(), 10u);
  for (std::size_t d = 0; d < s.corpus.documents.size(); ++d) {
    const auto& doc = s.corpus.documents[d];
    ASSERT_EQ(doc.sentences.size(), 4u);
    const auto& c = s.lexicon[s.doc_concept[d]];
    const std::string& chosen = s.doc_variant[d] == 0 ? c.variant_a : c.variant_b;
    const std::string& other = s.doc_variant[d] == 0 ? c.variant_b : c.variant_a;
    for (const auto& p : doc.sentences) {
      EXPECT_EQ(std::count(p.source.begin(), p.source.end(), c.source), 1);
      EXPECT_EQ(std::count(p.target.begin(), p.target.end(), chosen), 1);
      EXPECT_EQ(std::count(p.target.begin(), p.target.end(), other), 0);
      for (std::size_t k = 0; k < s.lexicon.size(); ++k) {
        if (k == s.doc_concept[d]) continue;
        EXPECT_EQ(std::count(p.target.begin(), p.target.end(), s.lexicon[k].variant_a), 0);
        EXPECT_EQ(std::count(p.target.begin(), p.target.end(), s.lexicon[k].variant_b), 0);
      }
    }
  }
}

TEST(Synthetic, VariantsAreBalancedPerConcept) {
  for (std::uint64_t seed : {1u, 2u, 3u, 99u}) {
    SynthOptions o;
    o.seed = seed;
    o.n_docs = 200;
    const auto s = generate_synthetic_cohesion_corpus(o);
    const auto ratios = variant_ratios(s);
    EXPECT_EQ(ratios.size(), 10u);
    for (double r : ratios) {
      EXPECT_GE(r, 0.4);
      EXPECT_LE(r, 0.6);
    }
  }
}

TEST(Synthetic, CueAppearsOnlyInTheOpeningSentence) {
  SynthOptions o;
  o.n_docs = 30;
  const auto s = generate_synthetic_cohesion_corpus(o);
  for (std::size_t d = 0; d < s.corpus.documents.size(); ++d) {
    const auto& doc = s.corpus.documents[d];
    EXPECT_EQ(doc.sentences[0].source.front(), s.doc_variant[d] == 0 ? "kinou" : "kyou");
    for (std::size_t i = 1; i < doc.sentences.size(); ++i) {
      EXPECT_NE(doc.sentences[i].source.front(), "kinou");
      EXPECT_NE(doc.sentences[i].source.front(), "kyou");
    }
  }
  o.first_sentence_cue = false;
  const auto plain = generate_synthetic_cohesion_corpus(o);
  for (const auto& doc : plain.corpus.documents) {
    EXPECT_NE(doc.sentences[0].source.front(), "kinou");
    EXPECT_NE(doc.sentences[0].source.front(), "kyou");
  }
}

TEST(Synthetic, PreconditionsAreEnforced) {
  SynthOptions o;
  o.n_concepts = 1;
  EXPECT_THROW(generate_synthetic_cohesion_corpus(o), ContractError);
  o.n_concepts = 2;
  o.doc_len = 1;
  EXPECT_THROW(generate_synthetic_cohesion_corpus(o), ContractError);
}

TEST(Synthetic, LexiconAndConceptFilesRoundTrip) {
  SynthOptions o;
  o.n_docs = 12;
  const auto s = generate_synthetic_cohesion_corpus(o);
  std::stringstream lex, concepts;
  write_lexicon(s.lexicon, lex);
  write_doc_concepts(s, concepts);
  const auto lexicon = read_lexicon(lex);
  ASSERT_EQ(lexicon.size(), s.lexicon.size());
  EXPECT_EQ(lexicon[0].variant_b, "clock");
  EXPECT_EQ(read_doc_concepts(concepts, s.corpus), s.doc_concept);
  std::istringstream bad("tokei\twatch\n");
  EXPECT_THROW(read_lexicon(bad), ParseError);

  // Reloaded text files number documents by position, so only the count is checked.
  std::stringstream again;
  write_doc_concepts(s, again);
  std::stringstream copy(again.str());
  std::string text;
  for (int d = 0; d < 12; ++d) text += d ? "\nw\n" : "w\n";
  auto other = parse(text, text);
  for (auto& d : other.documents) d.id = "other-" + d.id;
  EXPECT_THROW(read_doc_concepts(again, other), ParseError);
  EXPECT_EQ(read_doc_concepts(copy, 12), s.doc_concept);
  std::stringstream short_count(copy.str());
  EXPECT_THROW(read_doc_concepts(short_count, 11), ParseError);
  std::stringstream long_count(copy.str());
  EXPECT_THROW(read_doc_concepts(long_count, 13), DataError);
  bad.clear();
  bad.str("tokei\twatch\n");
  EXPECT_THROW(read_lexicon(bad), ParseError);
}
