#pragma once

#include <stdexcept>
#include <string>

namespace tagsong {

// Base for everything the library throws. The CLI maps NumericError to
// exit code 2 and every other Error to exit code 1.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};

struct ParseError : Error {
  using Error::Error;
};

struct SchemaError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct ParameterError : Error {
  using Error::Error;
};

struct IndexError : Error {
  using Error::Error;
};

struct EmptyLyricError : Error {
  using Error::Error;
};

struct NumericError : Error {
  using Error::Error;
};

}  // namespace tagsong
