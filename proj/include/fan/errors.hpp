#pragma once

#include <stdexcept>
#include <string>

namespace fan {

// Base of every error raised by the library. Subclasses map onto the CLI exit
// codes: numeric errors exit with 3, everything data/format related with 2.
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

class DomainError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// Bad magic, unsupported version, truncated stream.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Structurally valid file whose shapes disagree with each other or with a model.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Well-formed record carrying an invalid value (NaN feature, label >= C).
class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace fan
