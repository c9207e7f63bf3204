#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace synmt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not conform for an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf reached an operation that requires finite input.
class NumericError : public Error {
 public:
  using Error::Error;
};

// API misuse, e.g. backward() on a non-scalar or a batch that lacks data for the model variant.
class UsageError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Bad input data (misaligned files, malformed lines, corrupt checkpoints).
class DataError : public Error {
 public:
  using Error::Error;
};

// Invalid run configuration; `path` names the offending field.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

}  // namespace synmt
