#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mabex/error.hpp"

namespace mabex {

enum class TokenKind { identifier, integer, string, punct, annotation, end };

struct Token {
  TokenKind kind = TokenKind::end;
  std::string text;  // identifier name, punctuation, literal body or annotation text
  std::int64_t number = 0;
  SourceLoc loc;
};

// Splits scenario / expression source into tokens. Ordinary comments are
// dropped; a `// @EX:` line comment becomes an annotation token carrying the
// stripped fragment text.
std::vector<Token> tokenize(std::string_view text);

std::string describe(const Token& token);

// Cursor over a token vector shared by the expression and scenario parsers.
class TokenStream {
 public:
  explicit TokenStream(std::vector<Token> tokens);

  const Token& peek(std::size_t ahead = 0) const;
  Token next();
  bool at_end() const { return peek().kind == TokenKind::end; }

  bool is_punct(std::string_view p, std::size_t ahead = 0) const;
  bool is_ident(std::string_view name, std::size_t ahead = 0) const;
  bool accept_punct(std::string_view p);
  bool accept_ident(std::string_view name);

  void expect_punct(std::string_view p);
  std::string expect_identifier(std::string_view what = "identifier");

  [[noreturn]] void fail(std::string message, std::vector<std::string> expected = {}) const;

 private:
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

}  // namespace mabex
