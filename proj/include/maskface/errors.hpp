#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace maskface {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An argument outside its documented domain (eps <= 0, p >= 1, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an API precondition (backward on a non-scalar, missing grad).
class ContractError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed image or checkpoint bytes. `offset` is the byte position where
/// parsing failed, or -1 when not meaningful.
class FormatError : public Error {
 public:
  enum class Kind { kBadMagic, kBadVersion, kCrcMismatch, kTruncated, kBadHeader, kUnsupported };

  FormatError(Kind kind, const std::string& what, std::int64_t offset = -1)
      : Error(what), kind_(kind), offset_(offset) {}

  Kind kind() const noexcept { return kind_; }
  std::int64_t offset() const noexcept { return offset_; }

 private:
  Kind kind_;
  std::int64_t offset_;
};

class EmptyDatasetError : public Error {
 public:
  using Error::Error;
};

class SplitError : public Error {
 public:
  using Error::Error;
};

/// Pretrained tensors that cannot be applied to a model.
class LoadError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace maskface
