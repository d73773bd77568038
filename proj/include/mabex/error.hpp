#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mabex {

struct SourceLoc {
  int line = 0;
  int column = 0;

  friend bool operator==(const SourceLoc&, const SourceLoc&) = default;
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by the tokenizer and every parser built on it.
class ParseError : public Error {
 public:
  ParseError(SourceLoc loc, std::string message, std::vector<std::string> expected = {});

  SourceLoc loc() const { return loc_; }
  const std::string& detail() const { return detail_; }
  const std::vector<std::string>& expected() const { return expected_; }

 private:
  SourceLoc loc_;
  std::string detail_;
  std::vector<std::string> expected_;
};

// Expression evaluation failed (unknown attribute, type mismatch, missing variable).
class EvalError : public Error {
 public:
  using Error::Error;
};

// Playout engine misuse: unknown objects, wrong event origin, invalid world.
class EngineError : public Error {
 public:
  using Error::Error;
};

}  // namespace mabex
