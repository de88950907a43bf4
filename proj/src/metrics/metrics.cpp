#include "copyhan/metrics.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "copyhan/errors.hpp"
#include "stopwords_data.hpp"

namespace copyhan {

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const Tokens& s, std::size_t n) {
  NgramCounts out;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++out[Tokens(s.begin() + i, s.begin() + i + n)];
  return out;
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

BleuResult bleu4(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references) {
  if (candidates.size() != references.size()) {
    throw DataError("BLEU needs aligned sentences: " + std::to_string(candidates.size()) + " candidates, " +
                    std::to_string(references.size()) + " references");
  }
  BleuResult r;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    r.candidate_length += candidates[i].size();
    r.reference_length += references[i].size();
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto c = ngrams(candidates[i], n);
      const auto ref = ngrams(references[i], n);
      for (const auto& [g, k] : c) {
        auto it = ref.find(g);
        if (it != ref.end()) r.matches[n - 1] += std::min(k, it->second);
        r.totals[n - 1] += k;
      }
    }
  }
  if (r.candidate_length == 0) {
    r.warnings.push_back("empty candidate; BLEU is 0");
    return r;
  }
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 0; n < 4; ++n) {
    r.precisions[n] = r.totals[n] ? static_cast<double>(r.matches[n]) / static_cast<double>(r.totals[n]) : 0.0;
    if (r.matches[n] == 0) zero = true;
    else log_sum += std::log(r.precisions[n]);
  }
  const double c = static_cast<double>(r.candidate_length);
  const double ref = static_cast<double>(r.reference_length);
  r.brevity_penalty = c > ref ? 1.0 : std::exp(1.0 - ref / c);
  r.score = zero ? 0.0 : 100.0 * r.brevity_penalty * std::exp(log_sum / 4.0);
  return r;
}

BleuResult bleu4(const std::vector<TokenDocument>& candidates, const std::vector<TokenDocument>& references) {
  if (candidates.size() != references.size()) {
    throw DataError("BLEU needs aligned documents: " + std::to_string(candidates.size()) + " vs " +
                    std::to_string(references.size()));
  }
  std::vector<Tokens> c, r;
  for (std::size_t d = 0; d < candidates.size(); ++d) {
    if (candidates[d].size() != references[d].size()) {
      throw DataError("document " + std::to_string(d + 1) + " has " + std::to_string(candidates[d].size()) +
                      " candidate sentences and " + std::to_string(references[d].size()) + " reference sentences");
    }
    c.insert(c.end(), candidates[d].begin(), candidates[d].end());
    r.insert(r.end(), references[d].begin(), references[d].end());
  }
  return bleu4(c, r);
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw DataError("SHA-256 computation failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 15]);
  }
  return out;
}

StopwordList StopwordList::parse(const std::string& text, std::string version) {
  StopwordList list;
  list.version_ = std::move(version);
  list.sha256_ = sha256_hex(text);
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    list.words_.insert(lower(line));
  }
  return list;
}

const StopwordList& StopwordList::shipped() {
  static const StopwordList list = parse(detail::kStopwordsText, detail::kStopwordsVersion);
  return list;
}

bool StopwordList::contains(const std::string& token) const {
  if (token.empty()) return true;
  const bool symbolic = std::all_of(token.begin(), token.end(), [](char c) {
    const auto u = static_cast<unsigned char>(c);
    return std::isdigit(u) || std::ispunct(u);
  });
  return symbolic || words_.count(lower(token)) != 0;
}

Tokens content_words(const Tokens& sentence, const StopwordList& stopwords) {
  Tokens out;
  for (const auto& t : sentence)
    if (!stopwords.contains(t)) out.push_back(t);
  return out;
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool has_vowel(const std::string& s) { return s.find_first_of("aeiouy") != std::string::npos; }

// Replaces `suffix` with `with` when the result keeps at least three characters.
bool replace_suffix(std::string& s, const std::string& suffix, const std::string& with) {
  if (!ends_with(s, suffix) || s.size() - suffix.size() + with.size() < 3) return false;
  s = s.substr(0, s.size() - suffix.size()) + with;
  return true;
}

}  // namespace

std::string stem(const std::string& word) {
  std::string s = lower(word);
  if (s.size() < 3) return s;

  if (!replace_suffix(s, "'s", "")) replace_suffix(s, "'", "");

  if (ends_with(s, "sses")) {
    replace_suffix(s, "sses", "ss");
  } else if (ends_with(s, "ies")) {
    replace_suffix(s, "ies", "i");
  } else if (ends_with(s, "ses") || ends_with(s, "xes") || ends_with(s, "zes") || ends_with(s, "ches") ||
             ends_with(s, "shes")) {
    replace_suffix(s, "es", "");
  } else if (ends_with(s, "ss") || ends_with(s, "us") || ends_with(s, "is")) {
    // kept
  } else {
    replace_suffix(s, "s", "");
  }

  for (const char* suffix : {"ing", "ed"}) {
    const std::string suf(suffix);
    if (!ends_with(s, suf)) continue;
    const std::string rest = s.substr(0, s.size() - suf.size());
    if (rest.size() >= 3 && has_vowel(rest)) {
      s = rest;
      const char last = s.back();
      if (s.size() >= 4 && last == s[s.size() - 2] && !has_vowel(std::string(1, last)) && last != 'l' &&
          last != 's' && last != 'z') {
        s.pop_back();
      }
    }
    break;
  }

  replace_suffix(s, "ly", "");
  if (s.size() >= 3 && s.back() == 'y') s.back() = 'i';
  replace_suffix(s, "e", "");
  return s;
}

LcReport lc_score(const std::vector<TokenDocument>& documents, const StopwordList& stopwords) {
  if (documents.empty()) throw DataError("LC needs at least one document");
  LcReport r;
  for (std::size_t d = 0; d < documents.size(); ++d) {
    std::unordered_set<std::string> seen;
    std::size_t content = 0, devices = 0;
    for (const auto& sentence : documents[d]) {
      for (const auto& w : content_words(sentence, stopwords)) {
        ++content;
        if (!seen.insert(stem(w)).second) ++devices;
      }
    }
    if (content == 0) {
      r.per_document.push_back(std::nullopt);
      r.warnings.push_back("document " + std::to_string(d + 1) + " has no content words; excluded from LC");
      continue;
    }
    r.per_document.push_back(100.0 * static_cast<double>(devices) / static_cast<double>(content));
    r.content_words += content;
    r.devices += devices;
  }
  r.lc = r.content_words ? 100.0 * static_cast<double>(r.devices) / static_cast<double>(r.content_words) : 0.0;
  return r;
}

ConsistencyReport consistency_rate(const std::vector<TokenDocument>& candidates,
                                   const std::vector<ConceptPair>& lexicon,
                                   const std::vector<std::size_t>& doc_concepts) {
  if (candidates.size() != doc_concepts.size()) {
    throw DataError("consistency needs one concept per document (" + std::to_string(candidates.size()) +
                    " documents, " + std::to_string(doc_concepts.size()) + " concepts)");
  }
  ConsistencyReport r;
  for (std::size_t d = 0; d < candidates.size(); ++d) {
    if (doc_concepts[d] >= lexicon.size()) {
      throw DataError("concept index " + std::to_string(doc_concepts[d]) + " is outside the lexicon");
    }
    const auto& c = lexicon[doc_concepts[d]];
    // 0 = variant a, 1 = variant b, -1 = neither
    const auto variant_of = [&](const Tokens& s) {
      for (const auto& t : s) {
        if (t == c.variant_a) return 0;
        if (t == c.variant_b) return 1;
      }
      return -1;
    };
    const auto& doc = candidates[d];
    const int anchor = doc.empty() ? -1 : variant_of(doc[0]);
    if (anchor < 0) {
      ++r.unanchored_documents;
      continue;
    }
    for (std::size_t s = 1; s < doc.size(); ++s) {
      const int v = variant_of(doc[s]);
      if (v < 0) {
        ++r.dropped;
        continue;
      }
      ++r.compared;
      if (v == anchor) ++r.matched;
    }
  }
  r.rate = r.compared ? static_cast<double>(r.matched) / static_cast<double>(r.compared) : 0.0;
  return r;
}

std::vector<TokenDocument> token_documents(const DocumentCorpus& corpus, Side side) {
  std::vector<TokenDocument> out;
  for (const auto& doc : corpus.documents) {
    TokenDocument d;
    for (const auto& s : doc.sentences) d.push_back(side == Side::Source ? s.source : s.target);
    out.push_back(std::move(d));
  }
  return out;
}

namespace {

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string signed_fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%+.2f", v);
  return buf;
}

}  // namespace

void write_report_table(std::ostream& out, const std::vector<SystemScores>& systems, const LcReport& reference) {
  char line[256];
  std::snprintf(line, sizeof line, "%-14s %8s %8s %9s %12s\n", "system", "BLEU", "LC", "LC-ref", "consistency");
  out << line;
  std::snprintf(line, sizeof line, "%-14s %8s %8s %9s %12s\n", "reference", "-", fixed(reference.lc).c_str(), "-",
                "-");
  out << line;
  for (const auto& s : systems) {
    const std::string cons = s.consistency ? fixed(100.0 * s.consistency->rate) + "%" : "-";
    std::snprintf(line, sizeof line, "%-14s %8s %8s %9s %12s\n", s.name.c_str(), fixed(s.bleu.score).c_str(),
                  fixed(s.lc.lc).c_str(), signed_fixed(s.lc.lc - reference.lc).c_str(), cons.c_str());
    out << line;
  }
}

void write_report_records(std::ostream& out, const std::vector<SystemScores>& systems, const LcReport& reference,
                          const StopwordList& stopwords) {
  out << "system=reference lc=" << fixed(reference.lc, 6) << " content_words=" << reference.content_words
      << " devices=" << reference.devices << " stopwords=" << stopwords.version()
      << " stopwords_sha256=" << stopwords.sha256() << '\n';
  for (const auto& s : systems) {
    out << "system=" << s.name << " bleu=" << fixed(s.bleu.score, 6) << " bp=" << fixed(s.bleu.brevity_penalty, 6);
    for (std::size_t n = 0; n < 4; ++n) out << " p" << n + 1 << '=' << fixed(s.bleu.precisions[n], 6);
    out << " lc=" << fixed(s.lc.lc, 6) << " lc_delta=" << fixed(s.lc.lc - reference.lc, 6)
        << " content_words=" << s.lc.content_words << " devices=" << s.lc.devices;
    if (s.consistency) {
      out << " consistency=" << fixed(s.consistency->rate, 6) << " compared=" << s.consistency->compared
          << " dropped=" << s.consistency->dropped << " unanchored=" << s.consistency->unanchored_documents;
    }
    out << '\n';
  }
}

void write_token_documents(const std::vector<TokenDocument>& docs, std::ostream& out) {
  for (std::size_t d = 0; d < docs.size(); ++d) {
    if (d > 0) out << '\n';
    for (const auto& s : docs[d]) {
      if (s.empty()) {
        out << kUnkToken << '\n';
        continue;
      }
      for (std::size_t i = 0; i < s.size(); ++i) out << (i ? " " : "") << s[i];
      out << '\n';
    }
  }
}

void write_token_documents(const std::vector<TokenDocument>& docs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  write_token_documents(docs, out);
}

std::vector<TokenDocument> load_token_documents(const std::string& path) {
  return token_documents(load_one_side(path), Side::Source);
}

}  // namespace copyhan
