#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace heapguard {

enum class ErrorCode {
  SizeNotAligned,
  ZeroRequest,
  HeapExhausted,
  MulOverflow,
  InvalidFree,
  DoubleFree,
  ParseError,
  LinkError,
  ValidationError,
  StepBudgetExceeded,
  StackOverflow,
  UndefinedRegister,
  DuplicateType,
  OverlappingFields,
  UnknownTypeInBinding,
  UnknownField,
  UnknownInstance,
  MissingVerdict,
  BadInputExhausted,
};

std::string_view error_code_name(ErrorCode code) noexcept;

/// Every failure raised by the engine carries one of the codes above so
/// callers (tests, the CLI exit-code mapping) can branch on the kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace heapguard
