#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace notesearch {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A filter or request named a field outside the closed attribute set.
class UnknownField : public InvalidArgument {
 public:
  explicit UnknownField(std::string field)
      : InvalidArgument("unknown field: " + field), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class NormalizationError : public Error {
 public:
  using Error::Error;
};

// Raised by embedding providers. Transient failures may be retried.
class EmbeddingError : public Error {
 public:
  EmbeddingError(const std::string& what, bool transient)
      : Error(what), transient_(transient) {}
  bool transient() const noexcept { return transient_; }

 private:
  bool transient_;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class DuplicateIdError : public Error {
 public:
  DuplicateIdError(const std::string& what, std::vector<std::uint64_t> ids)
      : Error(what), ids_(std::move(ids)) {}
  const std::vector<std::uint64_t>& ids() const noexcept { return ids_; }

 private:
  std::vector<std::uint64_t> ids_;
};

class FormatError : public Error {
 public:
  enum class Kind { kBadMagic, kBadVersion, kTruncated, kChecksum, kMalformed };
  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class StorageError : public Error {
 public:
  using Error::Error;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

// Access to an existing resource denied by governance rules.
class PermissionDenied : public Error {
 public:
  using Error::Error;
};

class StaleCursorError : public Error {
 public:
  using Error::Error;
};

// A statistic whose value is mathematically undefined for the given input
// (e.g. chance agreement equal to one).
class UndefinedStatistic : public Error {
 public:
  using Error::Error;
};

}  // namespace notesearch
