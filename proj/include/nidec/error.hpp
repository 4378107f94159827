#ifndef NIDEC_ERROR_HPP
#define NIDEC_ERROR_HPP

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace nidec {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes of tensors handed to an operation do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A value went NaN/Inf during training; the run must be aborted.
class DivergedError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents. `offset()` is the byte offset where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

/// A record in a dataset stream is incomplete or inconsistent.
/// `record()` is 1-based.
class RecordError : public Error {
 public:
  RecordError(const std::string& what, std::uint64_t record)
      : Error(what + " (record " + std::to_string(record) + ")"), record_(record) {}
  std::uint64_t record() const { return record_; }

 private:
  std::uint64_t record_;
};

/// Invalid configuration value or unknown config key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace nidec

#endif  // NIDEC_ERROR_HPP
