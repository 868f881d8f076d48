#pragma once

#include <stdexcept>
#include <string>

namespace sotif {

/// Raised when a value breaks a domain invariant (degenerate box, d > T, ...).
/// The CLI maps it to exit code 3.
class InvariantError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an input file cannot be parsed. Carries the file, the
/// line or record that failed, and the rule it violated. Exit code 2.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string file, std::string location, std::string rule);

  const std::string& file() const noexcept { return file_; }
  const std::string& location() const noexcept { return location_; }
  const std::string& rule() const noexcept { return rule_; }

 private:
  std::string file_;
  std::string location_;
  std::string rule_;
};

}  // namespace sotif
