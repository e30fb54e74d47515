#pragma once

#include <stdexcept>
#include <string>

namespace vcgsa {

// Bad inputs: malformed files, inconsistent dimensions, invalid options.
// CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure inside an otherwise valid computation (singular fit,
// eigenvalue blow-up). CLI maps this to exit code 3.
class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace vcgsa
