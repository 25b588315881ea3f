#pragma once

#include <stdexcept>
#include <string>

namespace qreform {

// Base for every error thrown by this library. Callers that want blanket
// handling catch this; callers that care distinguish the subclasses.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed model output or data file content.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Transport failures, contract violations by a generation/embedding backend.
class ProviderError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Vector length disagreements.
class DimensionError : public Error {
 public:
  using Error::Error;
};

}  // namespace qreform
