#pragma once

// Corpus ingestion: vocabularies, encoding, token-budget slicing, POS
// annotation alignment and labeled datasets.
//
// File formats
//   corpus       UTF-8 text, tokens separated by spaces, one sequence per line
//   annotations  `token<TAB>tag` per line, a blank line between sequences
//   labeled set  `label<TAB>token token ...` per line, label in {0,1}

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "txray/error.hpp"

namespace txray {

using TokenId = std::int32_t;

inline constexpr std::string_view kUnkToken = "<unk>";

/// Splits on runs of spaces and tabs.
inline std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < text.size() && text[j] != ' ' && text[j] != '\t' && text[j] != '\r') ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

class Vocabulary {
 public:
  Vocabulary() = default;

  /// `tokens` must be unique; `<unk>` is appended when absent.
  explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    bool has_unk = false;
    for (const auto& t : tokens_) has_unk |= (t == kUnkToken);
    if (!has_unk) tokens_.emplace_back(kUnkToken);
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
        throw DataError("duplicate vocabulary token '" + tokens_[i] + "'");
      }
    }
    unk_id_ = index_.at(std::string(kUnkToken));
  }

  std::size_t size() const { return tokens_.size(); }
  TokenId unk_id() const { return unk_id_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  TokenId id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? unk_id_ : it->second;
  }
  bool contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

  const std::string& token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
      throw DataError("token id " + std::to_string(id) + " outside vocabulary of size " +
                      std::to_string(tokens_.size()));
    }
    return tokens_[static_cast<std::size_t>(id)];
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  TokenId unk_id_ = 0;
};

/// Counts tokens across any number of text streams, then freezes a Vocabulary.
/// Ordering: descending frequency, ties by first occurrence; `<unk>` last.
class VocabBuilder {
 public:
  void add_tokens(const std::vector<std::string>& tokens) {
    for (const auto& t : tokens) {
      if (t == kUnkToken) continue;
      auto [it, inserted] = slot_.emplace(t, counts_.size());
      if (inserted) counts_.push_back({t, 0});
      ++counts_[it->second].second;
      ++total_;
    }
  }

  void add_text(std::istream& in) {
    std::string line;
    while (std::getline(in, line)) add_tokens(split_tokens(line));
  }

  std::size_t total_tokens() const { return total_; }

  Vocabulary build(std::size_t min_count) const {
    if (total_ == 0) throw DataError("cannot build a vocabulary from an empty token stream");
    std::vector<std::size_t> order(counts_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return counts_[a].second > counts_[b].second; });
    std::vector<std::string> tokens;
    for (auto i : order) {
      if (counts_[i].second >= min_count) tokens.push_back(counts_[i].first);
    }
    return Vocabulary(std::move(tokens));
  }

 private:
  std::unordered_map<std::string, std::size_t> slot_;
  std::vector<std::pair<std::string, std::size_t>> counts_;  // first-occurrence order
  std::size_t total_ = 0;
};

inline Vocabulary build_vocab(std::istream& text, std::size_t min_count) {
  VocabBuilder b;
  b.add_text(text);
  return b.build(min_count);
}

inline Vocabulary build_vocab(std::string_view text, std::size_t min_count) {
  std::istringstream in{std::string(text)};
  return build_vocab(in, min_count);
}

struct TokenSequence {
  std::vector<TokenId> ids;
  std::size_t source_offset = 0;  // position of ids[0] in the corpus token stream

  std::size_t size() const { return ids.size(); }
  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

inline TokenSequence encode(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                            std::size_t source_offset = 0) {
  if (tokens.empty()) throw DataError("cannot encode an empty sequence");
  TokenSequence seq;
  seq.source_offset = source_offset;
  seq.ids.reserve(tokens.size());
  for (const auto& t : tokens) seq.ids.push_back(vocab.id(t));
  return seq;
}

inline TokenSequence encode(std::string_view text, const Vocabulary& vocab) {
  return encode(split_tokens(text), vocab);
}

inline std::string decode(const TokenSequence& seq, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    if (i) out += ' ';
    out += vocab.token(seq.ids[i]);
  }
  return out;
}

/// Sequences of per-token items (token strings or tags).
template <class T>
using Nested = std::vector<std::vector<T>>;

template <class T>
std::size_t total_items(const Nested<T>& nested) {
  std::size_t n = 0;
  for (const auto& s : nested) n += s.size();
  return n;
}

/// Keeps exactly min(k, total) leading items; a sequence cut by the budget
/// keeps its prefix.
template <class T>
Nested<T> slice_first_tokens(const Nested<T>& nested, std::size_t k) {
  if (k == 0) throw DataError("token budget must be at least 1");
  Nested<T> out;
  std::size_t left = k;
  for (const auto& s : nested) {
    if (left == 0) break;
    const std::size_t take = std::min(left, s.size());
    out.emplace_back(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(take));
    left -= take;
  }
  return out;
}

/// Raw text corpus: one token list per line; empty lines are skipped.
struct TextCorpus {
  std::string id;
  Nested<std::string> sequences;

  std::size_t token_count() const { return total_items(sequences); }
};

inline TextCorpus slice_first_tokens(const TextCorpus& corpus, std::size_t k) {
  return TextCorpus{corpus.id, slice_first_tokens(corpus.sequences, k)};
}

inline TextCorpus read_text_corpus(std::istream& in, std::string id) {
  TextCorpus c{std::move(id), {}};
  std::string line;
  while (std::getline(in, line)) {
    auto toks = split_tokens(line);
    if (!toks.empty()) c.sequences.push_back(std::move(toks));
  }
  return c;
}

inline TextCorpus load_text_corpus(const std::string& path, std::string id = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file " + path);
  return read_text_corpus(in, id.empty() ? path : std::move(id));
}

inline std::vector<TokenSequence> encode_corpus(const TextCorpus& corpus, const Vocabulary& vocab) {
  std::vector<TokenSequence> out;
  out.reserve(corpus.sequences.size());
  std::size_t offset = 0;
  for (const auto& s : corpus.sequences) {
    out.push_back(encode(s, vocab, offset));
    offset += s.size();
  }
  return out;
}

/// Concatenates sequences into one training stream.
inline std::vector<TokenId> flatten(const std::vector<TokenSequence>& seqs) {
  std::vector<TokenId> out;
  for (const auto& s : seqs) out.insert(out.end(), s.ids.begin(), s.ids.end());
  return out;
}

/// Per-token POS tags with the same sequence shape as the annotated corpus.
struct TagAnnotation {
  Nested<std::string> tags;

  std::size_t token_count() const { return total_items(tags); }

  std::set<std::string> inventory() const {
    std::set<std::string> inv;
    for (const auto& s : tags) inv.insert(s.begin(), s.end());
    return inv;
  }
};

inline TagAnnotation slice_first_tokens(const TagAnnotation& ann, std::size_t k) {
  return TagAnnotation{slice_first_tokens(ann.tags, k)};
}

/// Reads `token<TAB>tag` lines and checks them positionally against `corpus`.
/// Sequence boundaries (blank lines) must mirror the corpus lines.
inline TagAnnotation read_annotations(std::istream& in, const TextCorpus& corpus) {
  TagAnnotation ann;
  std::string line;
  std::size_t line_no = 0;
  std::size_t seq = 0;
  std::size_t pos_in_seq = 0;
  std::size_t position = 0;
  const std::size_t total = corpus.token_count();
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      if (pos_in_seq == 0) continue;  // repeated separators
      if (pos_in_seq != corpus.sequences[seq].size()) {
        throw AlignmentError("sequence ends early in annotations", position, line_no);
      }
      ++seq;
      pos_in_seq = 0;
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("annotation line lacks a TAB separator", line_no);
    const std::string token = line.substr(0, tab);
    const std::string tag = line.substr(tab + 1);
    if (tag.empty()) throw ParseError("annotation line has an empty tag", line_no);
    if (position >= total) {
      throw AlignmentError("annotation file is longer than the corpus (" + std::to_string(total) + " tokens)",
                           position, line_no);
    }
    if (pos_in_seq == corpus.sequences[seq].size()) {
      throw AlignmentError("missing sequence break in annotations", position, line_no);
    }
    const std::string& expected = corpus.sequences[seq][pos_in_seq];
    if (token != expected) {
      throw AlignmentError("token mismatch: annotation has '" + token + "', corpus has '" + expected + "'",
                           position, line_no);
    }
    if (pos_in_seq == 0) ann.tags.emplace_back();
    ann.tags.back().push_back(tag);
    ++pos_in_seq;
    ++position;
  }
  if (position != total) {
    throw AlignmentError("annotation file ends after " + std::to_string(position) + " of " +
                             std::to_string(total) + " corpus tokens",
                         position, line_no + 1);
  }
  return ann;
}

inline TagAnnotation load_annotations(const std::string& path, const TextCorpus& corpus) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open annotation file " + path);
  return read_annotations(in, corpus);
}

struct LabeledExample {
  TokenSequence sequence;
  int label = 0;
};

/// Labeled text before encoding; `corpus.sequences[i]` carries `labels[i]`.
struct LabeledText {
  TextCorpus corpus;
  std::vector<int> labels;
};

inline LabeledText read_labeled(std::istream& in, std::string id) {
  LabeledText out{TextCorpus{std::move(id), {}}, {}};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("labeled line lacks a TAB separator", line_no);
    const std::string label = line.substr(0, tab);
    if (label != "0" && label != "1") throw ParseError("label must be 0 or 1, got '" + label + "'", line_no);
    auto toks = split_tokens(std::string_view(line).substr(tab + 1));
    if (toks.empty()) throw ParseError("labeled line has no tokens", line_no);
    out.corpus.sequences.push_back(std::move(toks));
    out.labels.push_back(label == "1" ? 1 : 0);
  }
  return out;
}

inline LabeledText load_labeled(const std::string& path, std::string id = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open labeled dataset " + path);
  return read_labeled(in, id.empty() ? path : std::move(id));
}

inline std::vector<LabeledExample> encode_labeled(const LabeledText& data, const Vocabulary& vocab) {
  auto seqs = encode_corpus(data.corpus, vocab);
  std::vector<LabeledExample> out;
  out.reserve(seqs.size());
  for (std::size_t i = 0; i < seqs.size(); ++i) out.push_back({std::move(seqs[i]), data.labels[i]});
  return out;
}

}  // namespace txray
