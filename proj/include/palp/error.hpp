#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace palp {

enum class ErrorCode {
  NonPositiveAnthropometric,
  FieldOutOfRange,
  ParseError,
  SchemaVersionMismatch,
  EmptyTrace,
  NonMonotonicTimestamps,
  OutOfOrderSample,
  EmptySession,
  NotApplicable,
  MissingTask,
  DuplicateTask,
  OutOfRange,
  NoExpertData,
  NoTableForSensor,
  InvalidCalibration,
  InfeasibleProfile,
  DuplicateSession,
  UnknownSession,
  InvalidConfig,
  Io,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the engine carries a machine-readable code so the
// CLI and the HTTP front end can report it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Session-file parse failure; line is 1-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : Error(ErrorCode::ParseError,
              "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace palp
