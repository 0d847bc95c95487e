#pragma once

#include <stdexcept>
#include <string>

namespace scino {

// Exit-code bearing error categories surfaced by the CLI.
enum class ErrorKind : int {
  config = 2,
  data = 3,
  numeric = 4,
  provider = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

class ProviderError : public Error {
 public:
  explicit ProviderError(const std::string& what) : Error(ErrorKind::provider, what) {}
};

/// Rethrows `e` with a context prefix, keeping its category.
[[noreturn]] inline void rethrow_with_context(const Error& e, const std::string& prefix) {
  const std::string msg = prefix + ": " + e.what();
  switch (e.kind()) {
    case ErrorKind::config: throw ConfigError(msg);
    case ErrorKind::data: throw DataError(msg);
    case ErrorKind::numeric: throw NumericError(msg);
    case ErrorKind::provider: throw ProviderError(msg);
  }
  throw Error(e.kind(), msg);
}

}  // namespace scino
