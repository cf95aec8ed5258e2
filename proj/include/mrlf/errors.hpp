#pragma once

#include <stdexcept>
#include <string>

namespace mrlf {

// Bad user input: malformed files, inconsistent configs, schema violations.
// The CLI maps this to exit code 1; everything else to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mrlf
