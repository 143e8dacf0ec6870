#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace acmmd {

using Token = std::uint16_t;

// Ordered set of distinct symbols. Tokens are indices into `symbols()`.
// The terminal symbol, when declared, belongs to the alphabet but never
// appears inside a Sequence: termination is implicit at the end.
class Alphabet {
public:
  explicit Alphabet(std::vector<std::string> symbols,
                    std::optional<std::string> terminal = std::nullopt)
      : symbols_(std::move(symbols)) {
    if (symbols_.empty()) {
      throw std::invalid_argument("alphabet must contain at least one symbol");
    }
    if (symbols_.size() > 0xFFFF) {
      throw std::invalid_argument("alphabet too large");
    }
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
      for (std::size_t j = i + 1; j < symbols_.size(); ++j) {
        if (symbols_[i] == symbols_[j]) {
          throw std::invalid_argument("duplicate alphabet symbol '" +
                                      symbols_[i] + "'");
        }
      }
    }
    if (terminal) {
      auto id = find(*terminal);
      if (!id) {
        throw std::invalid_argument("terminal symbol '" + *terminal +
                                    "' is not in the alphabet");
      }
      terminal_ = *id;
    }
  }

  std::size_t size() const { return symbols_.size(); }
  const std::vector<std::string> &symbols() const { return symbols_; }
  const std::string &symbol(Token t) const { return symbols_.at(t); }

  std::optional<Token> terminal() const { return terminal_; }
  std::optional<std::string> terminal_symbol() const {
    if (!terminal_) return std::nullopt;
    return symbols_[*terminal_];
  }

  std::optional<Token> find(std::string_view s) const {
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
      if (symbols_[i] == s) return static_cast<Token>(i);
    }
    return std::nullopt;
  }

  friend bool operator==(const Alphabet &a, const Alphabet &b) {
    return a.symbols_ == b.symbols_ && a.terminal_ == b.terminal_;
  }

private:
  std::vector<std::string> symbols_;
  std::optional<Token> terminal_;
};

using AlphabetPtr = std::shared_ptr<const Alphabet>;

inline AlphabetPtr make_alphabet(std::vector<std::string> symbols,
                                 std::optional<std::string> terminal = {}) {
  return std::make_shared<const Alphabet>(std::move(symbols),
                                          std::move(terminal));
}

inline bool same_alphabet(const AlphabetPtr &a, const AlphabetPtr &b) {
  return a == b || (a && b && *a == *b);
}

// Finite, terminal-free token list over an alphabet.
class Sequence {
public:
  Sequence() = default;

  Sequence(AlphabetPtr alphabet, std::vector<Token> tokens)
      : alphabet_(std::move(alphabet)), tokens_(std::move(tokens)) {
    if (!alphabet_) throw std::invalid_argument("sequence without alphabet");
    const auto term = alphabet_->terminal();
    for (Token t : tokens_) {
      if (t >= alphabet_->size()) {
        throw std::invalid_argument("token id out of alphabet range");
      }
      if (term && t == *term) {
        throw std::invalid_argument(
            "terminal symbol may not appear inside a sequence");
      }
    }
  }

  static Sequence from_symbols(AlphabetPtr alphabet,
                               const std::vector<std::string> &symbols) {
    std::vector<Token> ids;
    ids.reserve(symbols.size());
    for (const auto &s : symbols) {
      auto id = alphabet->find(s);
      if (!id) {
        throw std::invalid_argument("symbol '" + s +
                                    "' is not in the alphabet");
      }
      ids.push_back(*id);
    }
    return Sequence(std::move(alphabet), std::move(ids));
  }

  // Parses a string of single-character symbols, e.g. "ABBA".
  static Sequence parse(AlphabetPtr alphabet, std::string_view text) {
    std::vector<std::string> symbols;
    for (char c : text) symbols.emplace_back(1, c);
    return from_symbols(std::move(alphabet), symbols);
  }

  const AlphabetPtr &alphabet() const { return alphabet_; }
  const std::vector<Token> &tokens() const { return tokens_; }
  std::size_t length() const { return tokens_.size(); }
  bool empty() const { return tokens_.empty(); }
  Token operator[](std::size_t i) const { return tokens_[i]; }

  std::vector<std::string> symbols() const {
    std::vector<std::string> out;
    out.reserve(tokens_.size());
    for (Token t : tokens_) out.push_back(alphabet_->symbol(t));
    return out;
  }

  std::string to_string() const {
    std::string out;
    for (Token t : tokens_) out += alphabet_->symbol(t);
    return out;
  }

  friend bool operator==(const Sequence &a, const Sequence &b) {
    return same_alphabet(a.alphabet_, b.alphabet_) && a.tokens_ == b.tokens_;
  }

private:
  AlphabetPtr alphabet_;
  std::vector<Token> tokens_;
};

} // namespace acmmd
