#include "mabex/lexer.hpp"

#include <cctype>
#include <sstream>
#include <utility>

namespace mabex {

namespace {

std::string format_parse_error(SourceLoc loc, const std::string& message,
                               const std::vector<std::string>& expected) {
  std::ostringstream os;
  os << loc.line << ":" << loc.column << ": " << message;
  if (!expected.empty()) {
    os << " (expected ";
    for (std::size_t i = 0; i < expected.size(); ++i) {
      if (i) os << ", ";
      os << '"' << expected[i] << '"';
    }
    os << ")";
  }
  return os.str();
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_part(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

}  // namespace

ParseError::ParseError(SourceLoc loc, std::string message, std::vector<std::string> expected)
    : Error(format_parse_error(loc, message, expected)),
      loc_(loc),
      detail_(std::move(message)),
      expected_(std::move(expected)) {}

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  int line = 1;
  int col = 1;

  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n && i < text.size(); ++k, ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
  };

  while (i < text.size()) {
    char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance(1);
      continue;
    }
    SourceLoc loc{line, col};

    if (text.substr(i, 2) == "//") {
      std::size_t eol = text.find('\n', i);
      if (eol == std::string_view::npos) eol = text.size();
      std::string_view body = trim(text.substr(i + 2, eol - i - 2));
      if (body.substr(0, 4) == "@EX:") {
        out.push_back({TokenKind::annotation, std::string(trim(body.substr(4))), 0, loc});
      }
      advance(eol - i);
      continue;
    }
    if (text.substr(i, 2) == "/*") {
      std::size_t close = text.find("*/", i + 2);
      if (close == std::string_view::npos) throw ParseError(loc, "unterminated block comment", {"*/"});
      advance(close + 2 - i);
      continue;
    }
    if (ident_start(c)) {
      std::size_t j = i;
      while (j < text.size() && ident_part(text[j])) ++j;
      out.push_back({TokenKind::identifier, std::string(text.substr(i, j - i)), 0, loc});
      advance(j - i);
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      Token t{TokenKind::integer, std::string(text.substr(i, j - i)), 0, loc};
      try {
        t.number = std::stoll(t.text);
      } catch (const std::out_of_range&) {
        throw ParseError(loc, "integer literal out of range");
      }
      out.push_back(std::move(t));
      advance(j - i);
      continue;
    }
    if (c == '"') {
      std::string body;
      std::size_t j = i + 1;
      for (; j < text.size() && text[j] != '"'; ++j) {
        if (text[j] == '\n') throw ParseError(loc, "unterminated string literal", {"\""});
        if (text[j] == '\\' && j + 1 < text.size()) ++j;
        body.push_back(text[j]);
      }
      if (j >= text.size()) throw ParseError(loc, "unterminated string literal", {"\""});
      out.push_back({TokenKind::string, std::move(body), 0, loc});
      advance(j + 1 - i);
      continue;
    }
    static constexpr std::string_view two_char[] = {"->", "==", "!=", "<=", ">=", "&&", "||"};
    bool matched = false;
    for (auto p : two_char) {
      if (text.substr(i, 2) == p) {
        out.push_back({TokenKind::punct, std::string(p), 0, loc});
        advance(2);
        matched = true;
        break;
      }
    }
    if (matched) continue;
    static constexpr std::string_view one_char = "(){}[].,=!<>*:";
    if (one_char.find(c) != std::string_view::npos) {
      out.push_back({TokenKind::punct, std::string(1, c), 0, loc});
      advance(1);
      continue;
    }
    throw ParseError(loc, std::string("unexpected character '") + c + "'");
  }
  out.push_back({TokenKind::end, "", 0, SourceLoc{line, col}});
  return out;
}

std::string describe(const Token& token) {
  switch (token.kind) {
    case TokenKind::end:
      return "end of input";
    case TokenKind::annotation:
      return "@EX annotation";
    case TokenKind::string:
      return "string \"" + token.text + "\"";
    default:
      return "'" + token.text + "'";
  }
}

TokenStream::TokenStream(std::vector<Token> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.empty() || tokens_.back().kind != TokenKind::end) {
    tokens_.push_back({TokenKind::end, "", 0, tokens_.empty() ? SourceLoc{1, 1} : tokens_.back().loc});
  }
}

const Token& TokenStream::peek(std::size_t ahead) const {
  std::size_t idx = pos_ + ahead;
  return idx < tokens_.size() ? tokens_[idx] : tokens_.back();
}

Token TokenStream::next() {
  Token t = peek();
  if (pos_ < tokens_.size() - 1) ++pos_;
  return t;
}

bool TokenStream::is_punct(std::string_view p, std::size_t ahead) const {
  const Token& t = peek(ahead);
  return t.kind == TokenKind::punct && t.text == p;
}

bool TokenStream::is_ident(std::string_view name, std::size_t ahead) const {
  const Token& t = peek(ahead);
  return t.kind == TokenKind::identifier && t.text == name;
}

bool TokenStream::accept_punct(std::string_view p) {
  if (!is_punct(p)) return false;
  next();
  return true;
}

bool TokenStream::accept_ident(std::string_view name) {
  if (!is_ident(name)) return false;
  next();
  return true;
}

void TokenStream::expect_punct(std::string_view p) {
  if (!accept_punct(p)) fail("unexpected " + describe(peek()), {std::string(p)});
}

std::string TokenStream::expect_identifier(std::string_view what) {
  if (peek().kind != TokenKind::identifier) fail("unexpected " + describe(peek()), {std::string(what)});
  return next().text;
}

void TokenStream::fail(std::string message, std::vector<std::string> expected) const {
  throw ParseError(peek().loc, std::move(message), std::move(expected));
}

}  // namespace mabex
