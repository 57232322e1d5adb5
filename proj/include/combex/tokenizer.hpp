#pragma once

// Whitespace/punctuation tokenizer and the token vocabulary used by the
// copy-constrained decoder. Tokenization is deterministic and reversible
// enough for surface matching: words are kept whole, hyphens are always
// split out as their own tokens, and other punctuation is split only at
// word edges.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace combex {

enum class TokenKind { Word, Punct, Special };

struct Token {
  std::string surface;
  TokenKind kind = TokenKind::Word;

  bool operator==(const Token& other) const { return surface == other.surface; }
  bool operator!=(const Token& other) const { return !(*this == other); }
};

namespace special {
inline constexpr const char* kSep = "[SEP]";
inline constexpr const char* kEos = "@EOS@";
inline constexpr const char* kDrug = "@DRUG@";
inline constexpr const char* kSemicolon = ";";
inline constexpr const char* kNer = "@NER@";
inline constexpr const char* kPos = "@POS@";
inline constexpr const char* kComb = "@COMB@";
inline constexpr const char* kNocomb = "@NOCOMB@";
inline constexpr const char* kNonPos = "@NON-POS@";
inline constexpr const char* kAnyComb = "@ANY-COMB@";
inline constexpr const char* kUnk = "<unk>";

// Multi-character special surfaces recognized as single tokens. ";" is not
// listed: it reaches token level through the ordinary punctuation path.
inline const std::vector<std::string>& surfaces() {
  static const std::vector<std::string> s = {
      kSep, kEos, kDrug, kNer, kPos, kComb, kNocomb, kNonPos, kAnyComb};
  return s;
}

inline bool is_special_surface(const std::string& t) {
  const auto& s = surfaces();
  return std::find(s.begin(), s.end(), t) != s.end();
}
}  // namespace special

inline Token make_special(const std::string& surface) {
  return Token{surface, TokenKind::Special};
}

inline Token eos_token() { return make_special(special::kEos); }

namespace detail {
inline bool is_punct_char(char c) {
  return std::ispunct(static_cast<unsigned char>(c)) != 0;
}

// Splits one whitespace-free chunk into tokens: leading/trailing punctuation
// peels off one character at a time, interior hyphens split the remainder.
inline void split_chunk(const std::string& chunk, std::vector<Token>& out) {
  if (chunk.empty()) return;
  if (special::is_special_surface(chunk)) {
    out.push_back(make_special(chunk));
    return;
  }
  std::size_t lo = 0;
  std::size_t hi = chunk.size();
  std::vector<Token> trailing;
  while (lo < hi && is_punct_char(chunk[lo])) {
    out.push_back(Token{std::string(1, chunk[lo]), TokenKind::Punct});
    ++lo;
  }
  while (hi > lo && is_punct_char(chunk[hi - 1])) {
    trailing.push_back(Token{std::string(1, chunk[hi - 1]), TokenKind::Punct});
    --hi;
  }
  std::string core = chunk.substr(lo, hi - lo);
  std::size_t start = 0;
  while (start <= core.size() && !core.empty()) {
    std::size_t dash = core.find('-', start);
    if (dash == std::string::npos) {
      out.push_back(Token{core.substr(start), TokenKind::Word});
      break;
    }
    if (dash > start) {
      out.push_back(Token{core.substr(start, dash - start), TokenKind::Word});
    }
    out.push_back(Token{"-", TokenKind::Punct});
    start = dash + 1;
    if (start == core.size()) break;  // trailing hyphen already handled above
  }
  for (auto it = trailing.rbegin(); it != trailing.rend(); ++it) {
    out.push_back(*it);
  }
}
}  // namespace detail

inline std::vector<Token> tokenize(const std::string& text) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) detail::split_chunk(text.substr(i, j - i), out);
    i = j;
  }
  return out;
}

inline std::string detokenize(const std::vector<Token>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i].surface;
  }
  return out;
}

// Id space: 0 = <unk> (encoder side only), 1..k = the fixed special block,
// then corpus tokens ordered by descending frequency with lexicographic
// tie-break. The decoder never emits id 0.
class Vocab {
 public:
  static constexpr int kUnkId = 0;

  static const std::vector<std::string>& special_block() {
    static const std::vector<std::string> block = {
        special::kSep,    special::kEos,    special::kDrug,
        special::kSemicolon, special::kNer, special::kPos,
        special::kComb,   special::kNocomb, special::kNonPos,
        special::kAnyComb};
    return block;
  }

  Vocab() {
    push(special::kUnk);
    for (const auto& s : special_block()) push(s);
  }

  static Vocab build(const std::vector<std::vector<Token>>& sequences) {
    std::map<std::string, long> freq;
    for (const auto& seq : sequences) {
      for (const auto& t : seq) ++freq[t.surface];
    }
    std::vector<std::pair<std::string, long>> order(freq.begin(), freq.end());
    std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    Vocab v;
    for (const auto& [tok, n] : order) {
      (void)n;
      if (!v.contains(tok)) v.push(tok);
    }
    return v;
  }

  int size() const { return static_cast<int>(id_to_tok_.size()); }

  bool contains(const std::string& t) const { return tok_to_id_.count(t) > 0; }

  int id(const std::string& t) const {
    auto it = tok_to_id_.find(t);
    return it == tok_to_id_.end() ? kUnkId : it->second;
  }

  int id(const Token& t) const { return id(t.surface); }

  const std::string& token(int id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("vocab id out of range");
    return id_to_tok_[static_cast<std::size_t>(id)];
  }

  int eos_id() const { return id(special::kEos); }

  int num_reserved() const { return 1 + static_cast<int>(special_block().size()); }

  bool is_reserved(int id) const { return id >= 0 && id < num_reserved(); }

  Token token_of(int id) const {
    const std::string& s = token(id);
    if (id >= 1 && id < num_reserved()) return Token{s, TokenKind::Special};
    if (s.size() == 1 && detail::is_punct_char(s[0])) return Token{s, TokenKind::Punct};
    return Token{s, TokenKind::Word};
  }

  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a 64
    for (const auto& t : id_to_tok_) {
      for (char c : t) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
      }
      h ^= static_cast<unsigned char>('\n');
      h *= 1099511628211ULL;
    }
    return h;
  }

  // One token per line, line number = id.
  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write vocab file: " + path);
    for (const auto& t : id_to_tok_) out << t << '\n';
  }

  static Vocab load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read vocab file: " + path);
    Vocab v;
    std::string line;
    int idx = 0;
    while (std::getline(in, line)) {
      if (idx < v.size()) {
        if (line != v.id_to_tok_[static_cast<std::size_t>(idx)]) {
          throw std::runtime_error("vocab file does not start with the reserved block: " + path);
        }
      } else {
        v.push(line);
      }
      ++idx;
    }
    return v;
  }

 private:
  void push(const std::string& t) {
    tok_to_id_.emplace(t, size());
    id_to_tok_.push_back(t);
  }

  std::vector<std::string> id_to_tok_;
  std::unordered_map<std::string, int> tok_to_id_;
};

}  // namespace combex
