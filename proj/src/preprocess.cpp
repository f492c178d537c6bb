#include "valence/preprocess.hpp"

#include <fstream>

namespace valence {
namespace detail {

// Invalid UTF-8 bytes are passed through as Latin-1 code points so that
// normalize() stays total: transcripts come from many transcribers and the
// pipeline must not die on a stray byte.
std::vector<uint32_t> decode_utf8(const std::string& text) {
  std::vector<uint32_t> out;
  out.reserve(text.size());
  size_t i = 0;
  const auto* bytes = reinterpret_cast<const unsigned char*>(text.data());
  const size_t n = text.size();
  while (i < n) {
    unsigned char b = bytes[i];
    if (b < 0x80) {
      out.push_back(b);
      ++i;
      continue;
    }
    int extra = 0;
    uint32_t cp = 0;
    if ((b & 0xE0) == 0xC0) {
      extra = 1;
      cp = b & 0x1F;
    } else if ((b & 0xF0) == 0xE0) {
      extra = 2;
      cp = b & 0x0F;
    } else if ((b & 0xF8) == 0xF0) {
      extra = 3;
      cp = b & 0x07;
    } else {
      out.push_back(b);  // stray continuation byte
      ++i;
      continue;
    }
    if (i + extra >= n) {  // truncated sequence
      out.push_back(b);
      ++i;
      continue;
    }
    bool ok = true;
    uint32_t acc = cp;
    for (int k = 1; k <= extra; ++k) {
      unsigned char cb = bytes[i + k];
      if ((cb & 0xC0) != 0x80) {
        ok = false;
        break;
      }
      acc = (acc << 6) | (cb & 0x3F);
    }
    if (!ok) {
      out.push_back(b);
      ++i;
    } else {
      out.push_back(acc);
      i += extra + 1;
    }
  }
  return out;
}

std::string encode_utf8(const std::vector<uint32_t>& codepoints) {
  std::string out;
  out.reserve(codepoints.size());
  for (uint32_t cp : codepoints) {
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
  }
  return out;
}

// Covers ASCII plus the Latin ranges that show up in German transcripts.
uint32_t lowercase_codepoint(uint32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
  // Latin-1 supplement: À..Þ except the multiplication sign.
  if (cp >= 0x00C0 && cp <= 0x00DE && cp != 0x00D7) return cp + 0x20;
  // Latin Extended-A comes in upper/lower pairs.
  if (cp >= 0x0100 && cp <= 0x0137) return (cp % 2 == 0) ? cp + 1 : cp;
  if (cp >= 0x0139 && cp <= 0x0148) return (cp % 2 == 1) ? cp + 1 : cp;
  if (cp >= 0x014A && cp <= 0x0177) return (cp % 2 == 0) ? cp + 1 : cp;
  if (cp == 0x0178) return 0x00FF;  // Ÿ
  if (cp >= 0x0179 && cp <= 0x017E) return (cp % 2 == 1) ? cp + 1 : cp;
  if (cp == 0x1E9E) return 0x00DF;  // capital sharp s
  return cp;
}

bool is_punctuation_codepoint(uint32_t cp) {
  if ((cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
      (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E))
    return true;
  switch (cp) {
    case 0x00A1:  // inverted exclamation
    case 0x00AB:  // «
    case 0x00AD:  // soft hyphen
    case 0x00B7:  // middle dot
    case 0x00BB:  // »
    case 0x00BF:  // inverted question
    case 0x2026:  // ellipsis
    case 0x2039:
    case 0x203A:
    case 0x2212:  // minus sign
      return true;
    default:
      break;
  }
  if (cp >= 0x2010 && cp <= 0x2015) return true;  // hyphens and dashes
  if (cp >= 0x2018 && cp <= 0x201F) return true;  // typographic quotes
  return false;
}

bool is_whitespace_codepoint(uint32_t cp) {
  switch (cp) {
    case 0x09:
    case 0x0A:
    case 0x0B:
    case 0x0C:
    case 0x0D:
    case 0x20:
    case 0x00A0:
    case 0x2028:
    case 0x2029:
    case 0x202F:
    case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

}  // namespace detail

namespace {

// Per-code-point transform shared by normalize() and tokenize(). Punctuation
// and whitespace both become separators; everything else is lowercased.
uint32_t transform_codepoint(uint32_t cp) {
  if (detail::is_punctuation_codepoint(cp) || detail::is_whitespace_codepoint(cp)) return 0x20;
  return detail::lowercase_codepoint(cp);
}

}  // namespace

std::string normalize(const std::string& text) {
  const std::vector<uint32_t> cps = detail::decode_utf8(text);
  std::vector<uint32_t> out;
  out.reserve(cps.size());
  bool pending_space = false;
  for (uint32_t cp : cps) {
    uint32_t t = transform_codepoint(cp);
    if (t == 0x20) {
      if (!out.empty()) pending_space = true;
    } else {
      if (pending_space) {
        out.push_back(0x20);
        pending_space = false;
      }
      out.push_back(t);
    }
  }
  return detail::encode_utf8(out);
}

TokenStream tokenize(const std::string& text) {
  const std::vector<uint32_t> cps = detail::decode_utf8(text);
  TokenStream stream;
  std::vector<uint32_t> current;
  size_t token_begin = 0;
  auto flush = [&](size_t end_index) {
    if (current.empty()) return;
    stream.tokens.push_back(detail::encode_utf8(current));
    stream.spans.push_back(Span{token_begin, end_index});
    current.clear();
  };
  for (size_t i = 0; i < cps.size(); ++i) {
    uint32_t t = transform_codepoint(cps[i]);
    if (t == 0x20) {
      flush(i);
    } else {
      if (current.empty()) token_begin = i;
      current.push_back(t);
    }
  }
  flush(cps.size());
  return stream;
}

TokenStream remove_stopwords(const TokenStream& stream, const std::unordered_set<std::string>& stoplist) {
  TokenStream out;
  for (size_t i = 0; i < stream.tokens.size(); ++i) {
    if (stoplist.count(stream.tokens[i])) continue;
    out.tokens.push_back(stream.tokens[i]);
    out.spans.push_back(stream.spans[i]);
  }
  return out;
}

std::vector<std::string> ngrams(const TokenStream& stream, int n_min, int n_max) {
  if (n_min < 1 || n_min > n_max)
    throw ValidationError("ngram range must satisfy 1 <= n_min <= n_max, got (" +
                          std::to_string(n_min) + ", " + std::to_string(n_max) + ")");
  std::vector<std::string> out;
  const int k = static_cast<int>(stream.tokens.size());
  for (int n = n_min; n <= n_max; ++n) {
    for (int i = 0; i + n <= k; ++i) {
      std::string gram = stream.tokens[i];
      for (int j = 1; j < n; ++j) {
        gram += ' ';
        gram += stream.tokens[i + j];
      }
      out.push_back(std::move(gram));
    }
  }
  return out;
}

std::unordered_set<std::string> load_stoplist(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open stoplist file: " + path);
  std::unordered_set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    // Entries are normalized so the stoplist is lowercase by construction.
    std::string token = normalize(line);
    if (!token.empty()) out.insert(token);
  }
  return out;
}

}  // namespace valence
