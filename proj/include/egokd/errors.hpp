#pragma once

#include <stdexcept>
#include <string>

namespace egokd {

// Exception hierarchy mapped to CLI exit codes:
//   UsageError -> 2, DataError -> 3, NumericError -> 4, IoError -> 5.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Archive failure modes, each distinguishable by type.
struct VersionError : DataError {
  explicit VersionError(const std::string& what) : DataError(what) {}
};

struct TruncatedError : DataError {
  explicit TruncatedError(const std::string& what) : DataError(what) {}
};

struct ChecksumError : DataError {
  explicit ChecksumError(const std::string& what) : DataError(what) {}
};

}  // namespace egokd
