#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sbi {

// Base for every error this library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Vector or matrix shapes that do not agree with the system parameters.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A stored record whose shape disagrees with the query; carries its id.
class RecordDimensionError : public DimensionError {
 public:
  RecordDimensionError(std::uint64_t id, const std::string& what) : DimensionError(what), id_(id) {}

  std::uint64_t id() const { return id_; }

 private:
  std::uint64_t id_;
};

// Invalid parameters or randomness configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// rand_invertible could not meet the conditioning target.
class ConditioningError : public Error {
 public:
  using Error::Error;
};

// An adversary oracle declined a request.
class OracleError : public Error {
 public:
  using Error::Error;
};

// Persistence failures. Each kind is distinguishable by callers.
class FormatError : public Error {
 public:
  enum class Kind { kIo, kBadMagic, kBadVersion, kTruncated, kIntegrity, kDimension };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace sbi
