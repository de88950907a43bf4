#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include "copyhan/corpus.hpp"
#include "copyhan/errors.hpp"

namespace copyhan {

namespace {

bool is_reserved_token(const std::string& t) {
  return t == kPadToken || t == kUnkToken || t == kBosToken || t == kEosToken || t == kSepToken;
}

}  // namespace

Vocabulary::Vocabulary() {
  for (const char* t : {kPadToken, kUnkToken, kBosToken, kEosToken}) add(t);
}

void Vocabulary::add(const std::string& token) {
  const auto id = static_cast<TokenId>(tokens_.size());
  if (!index_.emplace(token, id).second) throw DataError("duplicate vocabulary entry '" + token + "'");
  tokens_.push_back(token);
  if (token == kSepToken) separator_ = id;
}

Vocabulary Vocabulary::build(const DocumentCorpus& corpus, Side side, std::size_t max_size, std::size_t min_freq,
                             bool with_separator) {
  const std::size_t reserved = kNumReserved + (with_separator ? 1 : 0);
  if (max_size <= reserved) {
    throw ContractError("vocabulary cap " + std::to_string(max_size) + " leaves no room beyond the " +
                        std::to_string(reserved) + " reserved entries");
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& doc : corpus.documents)
    for (const auto& p : doc.sentences)
      for (const auto& t : side == Side::Source ? p.source : p.target)
        if (!is_reserved_token(t)) ++counts[t];

  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  // counts is already in byte order, so a stable sort on frequency keeps the tie-break.
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

  Vocabulary v;
  v.min_freq_ = min_freq;
  for (const auto& [token, n] : ranked) {
    if (v.size() + (with_separator ? 1 : 0) >= max_size || n < min_freq) break;
    v.add(token);
  }
  if (with_separator) v.add(kSepToken);
  return v;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < kNumReserved || tokens[kPadId] != kPadToken || tokens[kUnkId] != kUnkToken ||
      tokens[kBosId] != kBosToken || tokens[kEosId] != kEosToken) {
    throw DataError("vocabulary must start with " + std::string(kPadToken) + " " + kUnkToken + " " + kBosToken + " " +
                    kEosToken);
  }
  Vocabulary v;
  for (std::size_t i = kNumReserved; i < tokens.size(); ++i) {
    if (tokens[i].empty()) throw DataError("empty vocabulary entry at id " + std::to_string(i));
    v.add(tokens[i]);
  }
  return v;
}

TokenId Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw ContractError("token id " + std::to_string(id) + " outside a vocabulary of " + std::to_string(size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

TokenIds Vocabulary::encode(const Tokens& tokens) const {
  TokenIds out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

Tokens Vocabulary::decode(const TokenIds& ids, bool keep_special) const {
  Tokens out;
  for (TokenId id : ids) {
    if (!keep_special && ((is_reserved(id) && id != kUnkId) || id == separator_)) continue;
    out.push_back(token(id));
  }
  return out;
}

void Vocabulary::save(std::ostream& out) const {
  for (const auto& t : tokens_) out << t << '\n';
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocabulary: " + path);
  save(out);
}

Vocabulary Vocabulary::load(std::istream& in) {
  std::vector<std::string> tokens;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw ParseError("empty vocabulary line", n);
    tokens.push_back(line);
  }
  return from_tokens(tokens);
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open vocabulary: " + path);
  return load(in);
}

}  // namespace copyhan
