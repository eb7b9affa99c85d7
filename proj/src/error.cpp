#include "heapguard/error.hpp"

namespace heapguard {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::SizeNotAligned: return "SizeNotAligned";
    case ErrorCode::ZeroRequest: return "ZeroRequest";
    case ErrorCode::HeapExhausted: return "HeapExhausted";
    case ErrorCode::MulOverflow: return "MulOverflow";
    case ErrorCode::InvalidFree: return "InvalidFree";
    case ErrorCode::DoubleFree: return "DoubleFree";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::LinkError: return "LinkError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::StepBudgetExceeded: return "StepBudgetExceeded";
    case ErrorCode::StackOverflow: return "StackOverflow";
    case ErrorCode::UndefinedRegister: return "UndefinedRegister";
    case ErrorCode::DuplicateType: return "DuplicateType";
    case ErrorCode::OverlappingFields: return "OverlappingFields";
    case ErrorCode::UnknownTypeInBinding: return "UnknownTypeInBinding";
    case ErrorCode::UnknownField: return "UnknownField";
    case ErrorCode::UnknownInstance: return "UnknownInstance";
    case ErrorCode::MissingVerdict: return "MissingVerdict";
    case ErrorCode::BadInputExhausted: return "BadInputExhausted";
  }
  return "Unknown";
}

}  // namespace heapguard
