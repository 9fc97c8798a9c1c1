#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fedlpa {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape disagreement between operands, or a result that would exceed a cap.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Caller-supplied value violates a precondition (empty dataset, bad label...).
class InputError : public Error {
 public:
  using Error::Error;
};

// A matrix that must be positive definite is not (Cholesky pivot <= 0), or a
// precision-weighted average has zero total weight.
class SingularityError : public Error {
 public:
  using Error::Error;
};

// The explicit Kronecker oracle refuses instances above its size cap.
class RefusalError : public Error {
 public:
  using Error::Error;
};

// Malformed IDX or payload bytes.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

// Dirichlet sharding could not satisfy the minimum shard size.
class PartitionError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  IoError(const std::string& what, std::string path)
      : Error(what + ": " + path), path_(std::move(path)) {}

  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

}  // namespace fedlpa
