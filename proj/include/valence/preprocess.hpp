#pragma once

#include <cstddef>
#include <string>
#include <unordered_set>
#include <vector>

#include "valence/common.hpp"

namespace valence {

/// Half-open range of code-point offsets into the original (un-normalized) text.
struct Span {
  size_t begin = 0;
  size_t end = 0;
  bool operator==(const Span&) const = default;
};

// Lowercased tokens plus, for each token, the span it came from in the
// original text. Spans are kept so attention weights can be painted back
// onto the raw transcript.
struct TokenStream {
  std::vector<std::string> tokens;
  std::vector<Span> spans;

  size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
};

/// Lowercases, replaces punctuation with spaces, collapses whitespace, trims.
/// Umlauts and other Latin letters are lowercased but otherwise kept.
std::string normalize(const std::string& text);

/// normalize() then split on whitespace; spans index the original text.
TokenStream tokenize(const std::string& text);

/// Drops tokens found in the stoplist; survivor order and spans are kept.
TokenStream remove_stopwords(const TokenStream& stream, const std::unordered_set<std::string>& stoplist);

/// All contiguous n-grams for n in [n_min, n_max], space-joined, grouped by n
/// (all unigrams, then all bigrams, ...) and by position within each n.
std::vector<std::string> ngrams(const TokenStream& stream, int n_min, int n_max);

/// One lowercase token per line; '#' lines and blank lines ignored.
std::unordered_set<std::string> load_stoplist(const std::string& path);

namespace detail {
// UTF-8 <-> code point helpers shared with the corpus generator and tests.
std::vector<uint32_t> decode_utf8(const std::string& text);
std::string encode_utf8(const std::vector<uint32_t>& codepoints);
uint32_t lowercase_codepoint(uint32_t cp);
bool is_punctuation_codepoint(uint32_t cp);
bool is_whitespace_codepoint(uint32_t cp);
}  // namespace detail

}  // namespace valence
