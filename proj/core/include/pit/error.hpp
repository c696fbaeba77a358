#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pit {

// Malformed text input. `location` is a character offset for expressions and
// a 1-based line number for file formats.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t location)
      : std::runtime_error(what), location_(location) {}

  std::size_t location() const noexcept { return location_; }

 private:
  std::size_t location_;
};

// Operand shapes, layouts or plans that do not fit together.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pit
