#pragma once

#include <stdexcept>
#include <string>

namespace cvdisc {

// Error taxonomy mirrored by the CLI exit codes: IoError -> 2,
// ValidationError -> 3, NumericError -> 4.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : Error {
  using Error::Error;
};

// Malformed file content; carries a 1-based line number when known.
struct ParseError : IoError {
  ParseError(const std::string& path, long line, const std::string& what)
      : IoError(path + ":" + std::to_string(line) + ": " + what) {}
  explicit ParseError(const std::string& what) : IoError(what) {}
};

struct ValidationError : Error {
  using Error::Error;
};

struct NumericError : Error {
  using Error::Error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ValidationError(what);
}

}  // namespace cvdisc
