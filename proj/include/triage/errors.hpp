#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace triage {

// Root of every error the library throws. Callers that only need to report
// a failure can catch this; the subclasses exist so the CLI and service can
// map failure classes onto exit codes and HTTP statuses.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Missing or unexpected columns/keys in an input file.
class SchemaError : public Error {
 public:
  SchemaError(std::string key, const std::string& message)
      : Error(message), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

// A record that could not be decoded. record() is zero-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t record, const std::string& message)
      : Error("record " + std::to_string(record) + ": " + message),
        record_(record) {}
  std::size_t record() const noexcept { return record_; }

 private:
  std::size_t record_;
};

class DimensionMismatch : public Error {
 public:
  DimensionMismatch(std::size_t expected, std::size_t found)
      : Error("dimension mismatch: expected " + std::to_string(expected) +
              ", found " + std::to_string(found)),
        expected_(expected),
        found_(found) {}
  std::size_t expected() const noexcept { return expected_; }
  std::size_t found() const noexcept { return found_; }

 private:
  std::size_t expected_;
  std::size_t found_;
};

class DivergenceError : public Error {
 public:
  explicit DivergenceError(std::size_t epoch)
      : Error("training diverged (non-finite loss) at epoch " +
              std::to_string(epoch)),
        epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

// Persistence errors.
class FormatError : public Error {
 public:
  using Error::Error;
};

class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionError : public FormatError {
 public:
  VersionError(const std::string& what, std::uint32_t found,
               std::uint32_t supported)
      : FormatError(what + ": format version " + std::to_string(found) +
                    " is not supported (this build reads version " +
                    std::to_string(supported) + ")"),
        found_(found),
        supported_(supported) {}
  std::uint32_t found() const noexcept { return found_; }
  std::uint32_t supported() const noexcept { return supported_; }

 private:
  std::uint32_t found_;
  std::uint32_t supported_;
};

class MissingMemberError : public FormatError {
 public:
  explicit MissingMemberError(std::string member)
      : FormatError("bundle member missing: " + member),
        member_(std::move(member)) {}
  const std::string& member() const noexcept { return member_; }

 private:
  std::string member_;
};

class ChecksumError : public FormatError {
 public:
  explicit ChecksumError(std::string member)
      : FormatError("checksum mismatch for bundle member: " + member),
        member_(std::move(member)) {}
  const std::string& member() const noexcept { return member_; }

 private:
  std::string member_;
};

class ConfigHashError : public FormatError {
 public:
  using FormatError::FormatError;
};

// The inference input has no usable tokens.
class EmptyDescriptionError : public Error {
 public:
  EmptyDescriptionError()
      : Error("description is empty after cleaning; provide some words "
              "describing the issue") {}
};

// A training stage failed; wraps the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& cause)
      : Error("stage '" + stage + "' failed: " + cause),
        stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace triage
