#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "copyhan/errors.hpp"
#include "copyhan/metrics.hpp"
#include "support.hpp"

namespace copyhan {
namespace {

Tokens words(const std::string& s) {
  std::istringstream in(s);
  Tokens out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

TokenDocument doc(std::initializer_list<const char*> sentences) {
  TokenDocument d;
  for (const char* s : sentences) d.push_back(words(s));
  return d;
}

TEST(Bleu, IdenticalIsExactlyHundred) {
  std::vector<Tokens> refs{words("the cat sat on the mat"), words("he bought the new watch yesterday")};
  const auto r = bleu4(refs, refs);
  EXPECT_EQ(r.score, 100.0);
  EXPECT_EQ(r.brevity_penalty, 1.0);
}

TEST(Bleu, NoFourGramOverlapIsZero) {
  const auto r = bleu4({words("the cat sat the mat on")}, {words("the cat sat on the mat")});
  EXPECT_EQ(r.matches[3], 0u);
  EXPECT_EQ(r.score, 0.0);
}

TEST(Bleu, EmptyCandidateWarns) {
  const auto r = bleu4({Tokens{}}, {words("a b c d")});
  EXPECT_EQ(r.score, 0.0);
  EXPECT_FALSE(r.warnings.empty());
  EXPECT_THROW(bleu4({Tokens{}}, std::vector<Tokens>{}), DataError);
}

// Hand-worked: p1 = 7/9, p2 = 4/7, p3 = 2/5, p4 = 1/3 (the 3-token sentence has
// no 4-grams), c = 9, r = 10, BP = exp(-1/9).
TEST(Bleu, TwoSentenceHandCorpus) {
  const auto r = bleu4({words("the cat sat on the mat"), words("a dog ran")},
                       {words("the cat sat on a mat"), words("the dog ran away")});
  EXPECT_EQ(r.matches, (std::array<std::size_t, 4>{7, 4, 2, 1}));
  EXPECT_EQ(r.totals, (std::array<std::size_t, 4>{9, 7, 5, 3}));
  EXPECT_EQ(r.candidate_length, 9u);
  EXPECT_EQ(r.reference_length, 10u);
  EXPECT_NEAR(r.score, 44.15034607719596, 1e-9);
}

// Reference value from an independent implementation (nltk corpus_bleu, no
// smoothing) and a separate hand count: matches 105/74/52/31 over
// 119/99/79/59, c = 119, r = 125.
TEST(Bleu, TwentyPairFixture) {
  std::ifstream in(std::string(COPYHAN_TEST_DATA) + "/bleu_fixture.tsv");
  ASSERT_TRUE(in.good());
  std::vector<Tokens> cand, ref;
  std::string line;
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    cand.push_back(words(line.substr(0, tab)));
    ref.push_back(words(line.substr(tab + 1)));
  }
  ASSERT_EQ(cand.size(), 20u);
  const auto r = bleu4(cand, ref);
  EXPECT_NEAR(r.score, 65.71038300587632, 0.1);
  EXPECT_EQ(r.matches, (std::array<std::size_t, 4>{105, 74, 52, 31}));
  EXPECT_EQ(r.totals, (std::array<std::size_t, 4>{119, 99, 79, 59}));

  // Order of aligned pairs does not matter.
  std::vector<std::size_t> perm(cand.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(4));
  std::vector<Tokens> c2, r2;
  for (std::size_t i : perm) {
    c2.push_back(cand[i]);
    r2.push_back(ref[i]);
  }
  EXPECT_EQ(bleu4(c2, r2).score, r.score);
}

TEST(Bleu, DocumentsMustAlign) {
  std::vector<TokenDocument> c{doc({"a b", "c d"})}, r{doc({"a b"})};
  EXPECT_THROW(bleu4(c, r), DataError);
}

TEST(Stopwords, ContentWords) {
  EXPECT_EQ(content_words(words("the watch is good")), words("watch good"));
  EXPECT_TRUE(content_words(words("the of and , . 42 3.5")).empty());
  const auto once = content_words(words("my sister bought the very old car , yesterday ."));
  EXPECT_EQ(content_words(once), once);
  EXPECT_EQ(StopwordList::shipped().version(), "stopwords-v1");
  EXPECT_EQ(StopwordList::shipped().sha256().size(), 64u);
}

TEST(Stopwords, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Stem, Rules) {
  EXPECT_EQ(stem("watch"), stem("watches"));
  EXPECT_EQ(stem("car"), stem("cars"));
  EXPECT_EQ(stem("movie"), stem("movies"));
  EXPECT_EQ(stem("house"), stem("houses"));
  EXPECT_EQ(stem("study"), stem("studies"));
  EXPECT_EQ(stem("run"), stem("running"));
  EXPECT_EQ(stem("watched"), "watch");
  EXPECT_EQ(stem("class"), "class");
  EXPECT_EQ(stem("bus"), "bus");
  EXPECT_EQ(stem("tanaka's"), stem("tanaka"));
  EXPECT_EQ(stem("Watch"), "watch");
  EXPECT_EQ(stem("as"), "as");
  EXPECT_NE(stem("watch"), stem("clock"));
  EXPECT_NE(stem("film"), stem("movie"));
}

// Hand counts for the five fixture documents.
TEST(Lc, FixtureDocuments) {
  std::vector<TokenDocument> docs{
      doc({"the watch shines .", "the watch ticks ."}),                // watch shines watch ticks: 1/4
      doc({"tanaka bought a new car", "she likes the road"}),          // 6 distinct: 0/6
      doc({"i saw two cars", "the car was red", "cars are fast"}),     // saw car car red car fast: 2/6
      doc({"the of and", ", ."}),                                      // no content words
      doc({"watch watch", "watch watch"}),                             // 3/4
  };
  const auto r = lc_score(docs);
  ASSERT_EQ(r.per_document.size(), 5u);
  EXPECT_EQ(*r.per_document[0], 25.0);
  EXPECT_EQ(*r.per_document[1], 0.0);
  EXPECT_EQ(*r.per_document[2], 100.0 * 2.0 / 6.0);
  EXPECT_FALSE(r.per_document[3].has_value());
  EXPECT_EQ(*r.per_document[4], 75.0);
  EXPECT_EQ(r.content_words, 20u);
  EXPECT_EQ(r.devices, 6u);
  EXPECT_EQ(r.lc, 30.0);
  EXPECT_EQ(r.warnings.size(), 1u);
  EXPECT_THROW(lc_score({}), DataError);
}

std::vector<TokenDocument> random_documents(std::mt19937_64& rng, std::size_t n) {
  static const Tokens vocab = words("watch clock car house road film movie gift shop store red old new big the a is");
  std::vector<TokenDocument> docs(n);
  for (auto& d : docs) {
    d.resize(1 + rng() % 4);
    for (auto& s : d) {
      s.resize(1 + rng() % 6);
      for (auto& w : s) w = vocab[rng() % vocab.size()];
    }
  }
  return docs;
}

TEST(Lc, Properties) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    auto docs = random_documents(rng, 6);
    const auto base = lc_score(docs);
    EXPECT_GE(base.lc, 0.0);
    EXPECT_LE(base.lc, 100.0);
    EXPECT_LE(base.devices, base.content_words);

    auto shuffled = docs;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_EQ(lc_score(shuffled).lc, base.lc);

    auto doubled = docs;
    doubled.insert(doubled.end(), docs.begin(), docs.end());
    EXPECT_DOUBLE_EQ(lc_score(doubled).lc, base.lc);

    for (const auto& d : docs) {
      auto twice = d;
      twice.insert(twice.end(), d.begin(), d.end());
      const auto one = lc_score({d});
      const auto two = lc_score({twice});
      if (one.content_words > 0) {
        EXPECT_GE(two.lc, one.lc);
      }
    }
  }
}

TEST(Consistency, Examples) {
  const std::vector<ConceptPair> lex{{"tokei", "watch", "clock"}, {"eiga", "film", "movie"}};
  std::vector<TokenDocument> consistent{doc({"a watch", "the watch", "my watch"}), doc({"film", "film x"})};
  EXPECT_EQ(consistency_rate(consistent, lex, {0, 1}).rate, 1.0);

  std::vector<TokenDocument> alternated{doc({"watch", "clock"}), doc({"movie", "film"})};
  EXPECT_EQ(consistency_rate(alternated, lex, {0, 1}).rate, 0.0);

  // One inconsistency in four follow-ups.
  std::vector<TokenDocument> hand{doc({"the watch", "a watch", "the clock"}), doc({"movie", "movie", "movie"})};
  const auto r = consistency_rate(hand, lex, {0, 1});
  EXPECT_EQ(r.compared, 4u);
  EXPECT_EQ(r.matched, 3u);
  EXPECT_EQ(r.rate, 0.75);

  std::vector<TokenDocument> gaps{doc({"nothing here", "watch"}), doc({"film", "no variant", "movie"})};
  const auto g = consistency_rate(gaps, lex, {0, 1});
  EXPECT_EQ(g.unanchored_documents, 1u);
  EXPECT_EQ(g.dropped, 1u);
  EXPECT_EQ(g.compared, 1u);
  EXPECT_EQ(g.rate, 0.0);
  EXPECT_THROW(consistency_rate(gaps, lex, {0}), DataError);
  EXPECT_THROW(consistency_rate(gaps, lex, {0, 5}), DataError);
}

TEST(Report, TableAndRecords) {
  const auto ref = lc_score({doc({"the watch shines .", "the watch ticks ."})});
  SystemScores s{"copy", bleu4({words("a b c d")}, {words("a b c d")}), ref, ConsistencyReport{0.9, 9, 10, 0, 0}};
  std::ostringstream table, records;
  write_report_table(table, {s}, ref);
  write_report_records(records, {s}, ref);
  EXPECT_NE(table.str().find("copy"), std::string::npos);
  EXPECT_NE(table.str().find("100.00"), std::string::npos);
  EXPECT_NE(table.str().find("90.00%"), std::string::npos);
  EXPECT_NE(records.str().find("system=copy bleu=100.000000"), std::string::npos);
  EXPECT_NE(records.str().find("stopwords_sha256=" + StopwordList::shipped().sha256()), std::string::npos);
  EXPECT_NE(records.str().find("lc_delta=0.000000"), std::string::npos);
}

}  // namespace
}  // namespace copyhan
