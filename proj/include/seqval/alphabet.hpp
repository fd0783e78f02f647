#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "seqval/error.hpp"

namespace seqval {

using TokenId = std::uint32_t;

/// Token indices into an Alphabet. PAD, when used, is a contiguous suffix.
using Sequence = std::vector<TokenId>;

/// Ordered token set. Tokens may span several characters ("Cl", "Br").
/// Index size() is reserved for START, which the model consumes as its first
/// input and which never occurs in a Sequence.
class Alphabet {
 public:
  Alphabet() = default;

  explicit Alphabet(std::vector<std::string> tokens, std::optional<std::string> pad = std::nullopt)
      : tokens_(std::move(tokens)) {
    if (pad) {
      auto it = std::find(tokens_.begin(), tokens_.end(), *pad);
      if (it == tokens_.end()) {
        tokens_.push_back(*pad);
        it = tokens_.end() - 1;
      }
      pad_ = static_cast<TokenId>(it - tokens_.begin());
    }
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (tokens_[i].empty()) throw Error("alphabet token " + std::to_string(i) + " is empty");
      if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second)
        throw Error("duplicate alphabet token '" + tokens_[i] + "'");
      max_len_ = std::max(max_len_, tokens_[i].size());
    }
  }

  /// One token per character of `symbols`.
  static Alphabet from_chars(std::string_view symbols, std::optional<std::string> pad = std::nullopt) {
    std::vector<std::string> t;
    for (char c : symbols) t.emplace_back(1, c);
    return Alphabet(std::move(t), std::move(pad));
  }

  std::size_t size() const { return tokens_.size(); }
  TokenId start_index() const { return static_cast<TokenId>(tokens_.size()); }
  std::optional<TokenId> pad_index() const { return pad_; }
  bool has_pad() const { return pad_.has_value(); }
  bool is_pad(TokenId t) const { return pad_ && *pad_ == t; }

  const std::string& token(TokenId id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::optional<TokenId> find(std::string_view tok) const {
    auto it = index_.find(std::string(tok));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Tokens a sequence may draw from when sampling: everything except PAD.
  std::vector<TokenId> emitted_tokens() const {
    std::vector<TokenId> out;
    for (TokenId i = 0; i < tokens_.size(); ++i)
      if (!is_pad(i)) out.push_back(i);
    return out;
  }

  std::size_t emitted_size() const { return tokens_.size() - (pad_ ? 1 : 0); }

  /// Stable identifier derived from the ordered token list.
  std::string fingerprint() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](unsigned char c) {
      h ^= c;
      h *= 1099511628211ULL;
    };
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      for (char c : tokens_[i]) mix(static_cast<unsigned char>(c));
      mix(is_pad(static_cast<TokenId>(i)) ? 1 : 0);
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
  }

  bool operator==(const Alphabet& o) const { return tokens_ == o.tokens_ && pad_ == o.pad_; }

 private:
  std::vector<std::string> tokens_;
  std::optional<TokenId> pad_;
  std::unordered_map<std::string, TokenId> index_;
  std::size_t max_len_ = 0;

  friend Sequence tokenize(std::string_view, const Alphabet&);
};

inline constexpr std::string_view kDefaultPad = "_";

/// Python expression symbols: digits, operators, comparisons, brackets.
inline Alphabet expression_alphabet() { return Alphabet::from_chars("1234567890+-*/%!=<>()"); }

/// Kekule SMILES symbols, optionally extended with PAD.
inline Alphabet smiles_alphabet(bool with_pad = true) {
  std::vector<std::string> t = {"B", "C", "N", "O", "S", "P", "F", "I", "H", "Cl", "Br", "@", "=", "#", "/",
                                "\\", "1", "2", "3", "4", "5", "6", "7", "8", "-", "+", "(", ")", "[", "]"};
  if (with_pad) return Alphabet(std::move(t), std::string(kDefaultPad));
  return Alphabet(std::move(t));
}

/// Greedy longest-match segmentation.
inline Sequence tokenize(std::string_view text, const Alphabet& alphabet) {
  Sequence out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t best_len = 0;
    TokenId best = 0;
    for (TokenId i = 0; i < alphabet.tokens_.size(); ++i) {
      const std::string& tok = alphabet.tokens_[i];
      if (tok.size() > best_len && text.compare(pos, tok.size(), tok) == 0) {
        best_len = tok.size();
        best = i;
      }
    }
    if (best_len == 0) throw UnknownSymbol(pos);
    out.push_back(best);
    pos += best_len;
  }
  return out;
}

inline std::string detokenize(std::span<const TokenId> seq, const Alphabet& alphabet) {
  std::string out;
  for (TokenId t : seq) out += alphabet.token(t);
  return out;
}

inline Sequence pad_to(std::span<const TokenId> seq, std::size_t length, const Alphabet& alphabet) {
  if (!alphabet.has_pad()) throw NoPadToken();
  if (seq.size() > length) throw TooLong(seq.size(), length);
  Sequence out(seq.begin(), seq.end());
  out.resize(length, *alphabet.pad_index());
  return out;
}

/// Drops the trailing run of PAD tokens.
inline std::span<const TokenId> strip_pad(std::span<const TokenId> seq, const Alphabet& alphabet) {
  std::size_t n = seq.size();
  while (n > 0 && alphabet.is_pad(seq[n - 1])) --n;
  return seq.first(n);
}

/// True when PAD occurs only as a contiguous suffix.
inline bool pad_is_suffix(std::span<const TokenId> seq, const Alphabet& alphabet) {
  auto body = strip_pad(seq, alphabet);
  return std::none_of(body.begin(), body.end(), [&](TokenId t) { return alphabet.is_pad(t); });
}

/// Alphabet file: one token per line in order; `!pad <token>` marks PAD.
inline Alphabet read_alphabet(std::istream& in) {
  std::vector<std::string> tokens;
  std::optional<std::string> pad;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.rfind("!pad", 0) == 0) {
      std::string tok = line.substr(4);
      auto first = tok.find_first_not_of(' ');
      if (first == std::string::npos) throw ParseError("!pad needs a token", lineno);
      if (pad) throw ParseError("second !pad directive", lineno);
      pad = tok.substr(first);
      tokens.push_back(*pad);
      continue;
    }
    if (line[0] == '!') throw ParseError("unknown directive '" + line + "'", lineno);
    tokens.push_back(line);
  }
  return Alphabet(std::move(tokens), std::move(pad));
}

inline Alphabet load_alphabet(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open alphabet file '" + path + "'");
  return read_alphabet(in);
}

inline void write_alphabet(std::ostream& out, const Alphabet& alphabet) {
  for (TokenId i = 0; i < alphabet.size(); ++i) {
    if (alphabet.is_pad(i))
      out << "!pad " << alphabet.token(i) << '\n';
    else
      out << alphabet.token(i) << '\n';
  }
}

}  // namespace seqval
