#pragma once

#include <stdexcept>
#include <string>

namespace slowsem {

// Bad configuration values or inconsistent configs. CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input files. Carries the offending line number when known.
class ParseError : public ConfigError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : ConfigError(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Dangling references, missing images, broken corpus invariants. CLI exit code 3.
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite losses or other numerical breakdowns. CLI exit code 4.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace slowsem
