#pragma once

#include <stdexcept>
#include <string>

namespace semparse {

/// Root of every error the library throws. The CLI maps subclasses onto its
/// exit codes: configuration problems exit 1, data problems 2, training 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class VocabularyError : public Error {
 public:
  using Error::Error;
};

/// Malformed logical-form text; `position` is a byte offset into the input.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(what + " at position " + std::to_string(position)),
        position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

class StructureError : public Error {
 public:
  using Error::Error;
};

class AmbiguityError : public Error {
 public:
  using Error::Error;
};

/// Unreadable or malformed dataset, lexicon, or checkpoint file.
class DataError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace semparse
