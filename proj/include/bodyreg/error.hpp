#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bodyreg {

// Error categories shared by the C++ core and the C API status codes.
enum class ErrorCode {
  InvalidArgument = 1,
  Malformed,
  UnsupportedCodec,
  LengthMismatch,
  SchemaError,
  NotNormalized,
  IoError,
  DegenerateOrientation,
  MissingGeometry,
  EmptySeries,
  EmptyCohort,
  EmptyImage,
  EmptyClass,
  EmptyMatrix,
  DegenerateTable,
  ParamsOutOfRange,
  BackendFailure,
  InvalidParams,
  UnknownFactor,
  InvalidSpec,
  MissingPatientId,
};

std::string_view error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Parse failures carry the byte offset at which decoding stopped.
class MalformedError : public Error {
 public:
  MalformedError(std::size_t offset, const std::string& message)
      : Error(ErrorCode::Malformed, message + " at offset " + std::to_string(offset)),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// Line-oriented input (NDJSON, CSV) reports the 1-based line number.
class SchemaError : public Error {
 public:
  SchemaError(std::size_t line, const std::string& message)
      : Error(ErrorCode::SchemaError, "line " + std::to_string(line) + ": " + message), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace bodyreg
