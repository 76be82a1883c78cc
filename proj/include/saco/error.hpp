#pragma once

#include <stdexcept>
#include <string>

namespace saco {

// Bad input or configuration; the CLI maps it to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

// Failure during a run (non-finite loss, I/O); exit code 2.
class RuntimeError : public std::runtime_error {
 public:
  explicit RuntimeError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace saco
