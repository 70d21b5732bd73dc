#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace wmobs {

enum class ErrorCode {
  InvalidSpec,
  InvalidLength,
  WrongScheme,
  TooShort,
  DegenerateDist,
  EmptyMessage,
  InvalidCount,
  NoKeys,
  InsufficientNulls,
  SizeMismatch,
  EmptyTestSet,
  EmptyOutput,
  MissingClass,
  NonFiniteLoss,
  BadK,
  InsufficientPool,
  PoolTooSmall,
  BadAxis,
  IoError,
  SchemaError,
  EmptyReport,
  MetricMissing,
};

std::string_view to_string(ErrorCode code);

// Every failure in the library surfaces as this exception. `code()` is the
// stable discriminator; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), detail_(what) {}

  ErrorCode code() const noexcept { return code_; }
  // The message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

// Config errors additionally carry the offending key.
class SchemaError : public Error {
 public:
  SchemaError(std::string key, const std::string& what)
      : Error(ErrorCode::SchemaError, what), key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace wmobs
