#pragma once

#include <stdexcept>
#include <string>

namespace skelar {

// Error taxonomy mirrored by the CLI exit codes: usage errors are handled by
// the argument parser, data_error maps to exit code 2, numeric_error to 3.
class data_error : public std::runtime_error {
 public:
  explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Violated API contract (wrong shapes, missing grads, bad state).
class contract_error : public std::logic_error {
 public:
  explicit contract_error(const std::string& msg) : std::logic_error(msg) {}
};

// Parse failure that knows where in the input it happened.
class parse_error : public data_error {
 public:
  parse_error(const std::string& msg, std::size_t line)
      : data_error(msg + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace skelar
