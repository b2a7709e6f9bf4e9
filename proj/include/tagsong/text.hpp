#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "tagsong/errors.hpp"
#include "tagsong/matrix.hpp"
#include "tagsong/stopwords.hpp"

namespace tagsong {

// Lyric as embedding-vocabulary row indices. source_len is the token count
// before OOV dropping and truncation.
struct TokenSequence {
  std::vector<std::size_t> tokens;
  std::size_t source_len = 0;
};

// Frozen word -> vector lookup table. Never updated by the optimizer.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim = 300) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return words_.size(); }

  // Appends a row; the first occurrence of a duplicate word wins.
  // Returns false when the word was already present.
  bool add(const std::string& word, const std::vector<double>& values) {
    if (values.size() != dim_) throw ShapeError("EmbeddingTable::add: wrong vector length");
    if (vocab_.count(word)) return false;
    vocab_.emplace(word, words_.size());
    words_.push_back(word);
    for (double v : values) {
      if (!std::isfinite(v)) throw NumericError("EmbeddingTable::add: non-finite component");
      weights_.push_back(v);
    }
    return true;
  }

  std::optional<std::size_t> lookup(const std::string& word) const {
    auto it = vocab_.find(word);
    if (it == vocab_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& word(std::size_t row) const { return words_[row]; }

  // Copies row `id` into a dim x 1 column vector.
  Matrix row(std::size_t id) const {
    if (id >= size()) throw IndexError("EmbeddingTable::row: id out of range");
    Matrix out(dim_, 1);
    for (std::size_t c = 0; c < dim_; ++c) out[c] = weights_[id * dim_ + c];
    return out;
  }

  // FNV-1a over the raw weight bits; used to assert the table stays frozen.
  std::uint64_t checksum() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (double v : weights_) {
      std::uint64_t bits;
      static_assert(sizeof(bits) == sizeof(v));
      __builtin_memcpy(&bits, &v, sizeof(bits));
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xFF;
        h *= 0x100000001B3ULL;
      }
    }
    return h;
  }

 private:
  std::size_t dim_;
  std::map<std::string, std::size_t> vocab_;
  std::vector<std::string> words_;
  std::vector<double> weights_;  // size() x dim_, row-major
};

// Lowercases, replaces every non-alphanumeric byte with a space, splits on
// whitespace. No stop-word removal; used for lyrics and tag names alike.
inline std::vector<std::string> tokenize(const std::string& raw) {
  std::string cleaned;
  cleaned.reserve(raw.size());
  for (unsigned char ch : raw) {
    if (std::isalnum(ch)) {
      cleaned.push_back(static_cast<char>(std::tolower(ch)));
    } else {
      cleaned.push_back(' ');
    }
  }
  std::vector<std::string> tokens;
  std::istringstream in(cleaned);
  std::string tok;
  while (in >> tok) tokens.push_back(tok);
  return tokens;
}

// Tokenize + stop-word removal, order preserved. Throws EmptyLyricError when
// nothing survives; the caller decides whether to skip the sample.
inline std::vector<std::string> preprocess_lyric(
    const std::string& raw, const std::vector<std::string>& stop_words = default_stop_words()) {
  const std::unordered_set<std::string> stops(stop_words.begin(), stop_words.end());
  std::vector<std::string> out;
  for (auto& tok : tokenize(raw)) {
    if (!stops.count(tok)) out.push_back(std::move(tok));
  }
  if (out.empty()) throw EmptyLyricError("preprocess_lyric: no tokens left after preprocessing");
  return out;
}

// Maps words to table row indices. Out-of-vocabulary words are dropped (the
// table is frozen, so unseen words carry no trainable signal); the head of
// the sequence is kept when truncating to max_len.
inline TokenSequence tokens_to_embedding_ids(const std::vector<std::string>& words,
                                             const EmbeddingTable& table,
                                             std::size_t max_len = 500) {
  TokenSequence seq;
  seq.source_len = words.size();
  for (const auto& w : words) {
    if (seq.tokens.size() >= max_len) break;
    if (auto id = table.lookup(w)) seq.tokens.push_back(*id);
  }
  if (seq.tokens.empty()) {
    throw EmptyLyricError("tokens_to_embedding_ids: every token is out of vocabulary");
  }
  return seq;
}

// Row t is a verbatim copy of the table row for token t (one-hot selection).
inline Matrix embed_tokens(const TokenSequence& seq, const EmbeddingTable& table) {
  Matrix out(seq.tokens.size(), table.dim());
  for (std::size_t t = 0; t < seq.tokens.size(); ++t) {
    const std::size_t id = seq.tokens[t];
    if (id >= table.size()) throw IndexError("embed_tokens: token id out of range");
    const Matrix row = table.row(id);
    for (std::size_t c = 0; c < table.dim(); ++c) out(t, c) = row[c];
  }
  return out;
}

// word2vec text format: header "V D", then "word v1 ... vD" per line.
// The header dimension must equal expected_dim (callers may override the
// default of 300). Duplicate words: first occurrence wins with a warning.
inline EmbeddingTable load_embeddings(const std::string& path, std::size_t expected_dim = 300) {
  std::ifstream in(path);
  if (!in) throw ParseError("load_embeddings: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ":1: missing header");
  std::istringstream header(line);
  std::size_t count = 0, dim = 0;
  if (!(header >> count >> dim)) throw ParseError(path + ":1: malformed header, expected 'V D'");
  if (dim != expected_dim) {
    throw ParseError(path + ":1: dimension " + std::to_string(dim) + " does not match expected " +
                     std::to_string(expected_dim));
  }
  EmbeddingTable table(dim);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string word;
    if (!(row >> word)) throw ParseError(path + ":" + std::to_string(line_no) + ": missing word");
    std::vector<double> values(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      if (!(row >> values[i])) {
        throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                         std::to_string(dim) + " values for '" + word + "'");
      }
    }
    double extra;
    if (row >> extra) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": trailing values for '" + word +
                       "'");
    }
    if (!table.add(word, values)) {
      std::cerr << "warning: " << path << ":" << line_no << ": duplicate word '" << word
                << "', keeping first occurrence\n";
    }
  }
  if (table.size() != count) {
    std::cerr << "warning: " << path << ": header reports " << count << " words, loaded "
              << table.size() << "\n";
  }
  return table;
}

// One word per line, UTF-8.
inline std::vector<std::string> load_stop_words(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("load_stop_words: cannot open " + path);
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (!line.empty()) words.push_back(line);
  }
  return words;
}

}  // namespace tagsong
