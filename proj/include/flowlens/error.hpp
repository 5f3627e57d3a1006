#pragma once

#include <stdexcept>
#include <string>

namespace flowlens {

// Base for every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input could not be opened or is not a capture we understand.
class IoError : public Error {
 public:
  using Error::Error;
};

// A text input (fingerprint DB, scenario config, CLI value) failed to parse.
class ParseError : public Error {
 public:
  using Error::Error;
};

// A numeric routine was asked for something undefined on its input.
class DomainError : public Error {
 public:
  using Error::Error;
};

}  // namespace flowlens
