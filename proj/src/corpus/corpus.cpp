#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "copyhan/corpus.hpp"
#include "copyhan/errors.hpp"

namespace copyhan {

std::size_t DocumentCorpus::sentence_count() const {
  std::size_t n = 0;
  for (const auto& d : documents) n += d.sentences.size();
  return n;
}

namespace {

bool has_space(const std::string& t) {
  for (char c : t)
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') return true;
  return false;
}

// Rejects malformed UTF-8 (overlongs and surrogates included).
bool valid_utf8(const std::string& s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t extra;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c >> 5) == 0x6) {
      extra = 1;
      cp = c & 0x1f;
    } else if ((c >> 4) == 0xe) {
      extra = 2;
      cp = c & 0x0f;
    } else if ((c >> 3) == 0x1e) {
      extra = 3;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + extra >= s.size()) return false;
    for (std::size_t k = 1; k <= extra; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc >> 6) != 0x2) return false;
      cp = (cp << 6) | (cc & 0x3f);
    }
    if ((extra == 1 && cp < 0x80) || (extra == 2 && cp < 0x800) || (extra == 3 && cp < 0x10000)) return false;
    if (cp > 0x10ffff || (cp >= 0xd800 && cp <= 0xdfff)) return false;
    i += extra + 1;
  }
  return true;
}

Tokens split_tokens(const std::string& line) {
  Tokens out;
  std::istringstream in(line);
  std::string t;
  while (in >> t) out.push_back(t);
  return out;
}

struct Line {
  bool ok = false;
  std::string text;
};

Line next_line(std::istream& in) {
  Line l;
  if (!std::getline(in, l.text)) return l;
  if (!l.text.empty() && l.text.back() == '\r') l.text.pop_back();
  l.ok = true;
  return l;
}

}  // namespace

void DocumentCorpus::validate() const {
  if (documents.empty()) throw DataError("corpus has no documents");
  for (std::size_t d = 0; d < documents.size(); ++d) {
    const auto& doc = documents[d];
    if (doc.sentences.empty()) throw DataError("document " + doc.id + " is empty");
    for (std::size_t s = 0; s < doc.sentences.size(); ++s) {
      const auto& p = doc.sentences[s];
      if (p.source.empty() || p.target.empty()) {
        throw DataError("document " + doc.id + " sentence " + std::to_string(s + 1) + " is empty");
      }
      for (const auto* side : {&p.source, &p.target})
        for (const auto& t : *side)
          if (t.empty() || has_space(t)) {
            throw DataError("document " + doc.id + " sentence " + std::to_string(s + 1) +
                            " has a token that is empty or contains whitespace");
          }
    }
  }
}

DocumentCorpus parse_corpus(std::istream& source, std::istream& target, const std::string& origin) {
  const std::string where = origin.empty() ? "" : origin + ": ";
  DocumentCorpus corpus;
  Document current;
  std::size_t line_no = 0;
  auto close_document = [&] {
    if (current.sentences.empty()) return;
    current.id = "doc" + std::to_string(corpus.documents.size() + 1);
    corpus.documents.push_back(std::move(current));
    current = Document{};
  };
  for (;;) {
    Line s = next_line(source);
    Line t = next_line(target);
    ++line_no;
    if (!s.ok && !t.ok) break;
    if (s.ok != t.ok) {
      throw ParseError(where + std::string(s.ok ? "target" : "source") + " file ends before the other", line_no);
    }
    if (!valid_utf8(s.text) || !valid_utf8(t.text)) throw ParseError(where + "invalid UTF-8", line_no);
    Tokens src = split_tokens(s.text);
    Tokens tgt = split_tokens(t.text);
    if (src.empty() != tgt.empty()) {
      throw ParseError(where + "document boundary in the " + std::string(src.empty() ? "source" : "target") +
                           " file only",
                       line_no);
    }
    if (src.empty()) {
      close_document();
      continue;
    }
    current.sentences.push_back({std::move(src), std::move(tgt)});
  }
  close_document();
  if (corpus.documents.empty()) throw DataError(where + "corpus is empty");
  return corpus;
}

DocumentCorpus load_corpus(const std::string& source_path, const std::string& target_path) {
  std::ifstream s(source_path, std::ios::binary);
  if (!s) throw DataError("cannot open source corpus: " + source_path);
  std::ifstream t(target_path, std::ios::binary);
  if (!t) throw DataError("cannot open target corpus: " + target_path);
  return parse_corpus(s, t, source_path + " / " + target_path);
}

DocumentCorpus load_one_side(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::stringstream a, b;
  a << in.rdbuf();
  b << a.str();
  return parse_corpus(a, b, path);
}

void write_corpus_side(const DocumentCorpus& corpus, bool target_side, std::ostream& out) {
  for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
    if (d > 0) out << '\n';
    for (const auto& p : corpus.documents[d].sentences) {
      const Tokens& toks = target_side ? p.target : p.source;
      for (std::size_t i = 0; i < toks.size(); ++i) out << (i ? " " : "") << toks[i];
      out << '\n';
    }
  }
}

void write_corpus(const DocumentCorpus& corpus, const std::string& source_path, const std::string& target_path) {
  corpus.validate();
  for (bool tgt : {false, true}) {
    const std::string& path = tgt ? target_path : source_path;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write corpus file: " + path);
    write_corpus_side(corpus, tgt, out);
    if (!out) throw DataError("failed writing corpus file: " + path);
  }
}

void write_manifest(const DocumentCorpus& corpus, std::ostream& out) {
  std::size_t line = 1;
  for (const auto& doc : corpus.documents) {
    const std::size_t end = line + doc.sentences.size() - 1;
    out << doc.id << '\t' << line << '\t' << end << '\n';
    line = end + 2;
  }
}

void write_manifest(const DocumentCorpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest: " + path);
  write_manifest(corpus, out);
}

}  // namespace copyhan
