#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace crlsim {

// Base of every error the library throws.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed trace text. line() is 1-based.
class TraceParseError : public Error {
 public:
  TraceParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// A structurally valid line whose core field is not a usable core id.
class TraceFormatError : public TraceParseError {
 public:
  using TraceParseError::TraceParseError;
};

// A configuration value out of its domain. path() names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& what)
      : Error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

struct NumericError : Error {
  using Error::Error;
};

// A core's trace ran out before warmup + simulation events were consumed.
class TruncationError : public Error {
 public:
  TruncationError(unsigned core, const std::string& what)
      : Error("core " + std::to_string(core) + ": " + what), core_(core) {}
  unsigned core() const noexcept { return core_; }

 private:
  unsigned core_;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace crlsim
