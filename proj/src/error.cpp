#include "mrtumor/error.hpp"

namespace mrtumor {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kUnsupportedDatatype: return "UnsupportedDatatype";
    case ErrorCode::kTruncatedFile: return "TruncatedFile";
    case ErrorCode::kBadHeader: return "BadHeader";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kIoFailure: return "IoFailure";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kInvalidSpec: return "InvalidSpec";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kBadDims: return "BadDims";
    case ErrorCode::kWrongSliceCount: return "WrongSliceCount";
    case ErrorCode::kDegenerateInput: return "DegenerateInput";
    case ErrorCode::kSingleClass: return "SingleClass";
    case ErrorCode::kEmptyCounts: return "EmptyCounts";
    case ErrorCode::kNoPositives: return "NoPositives";
    case ErrorCode::kNoNegatives: return "NoNegatives";
    case ErrorCode::kMissingModel: return "MissingModel";
    case ErrorCode::kMissingTemplate: return "MissingTemplate";
    case ErrorCode::kConfigInvalid: return "ConfigInvalid";
    case ErrorCode::kBadModel: return "BadModel";
  }
  return "Unknown";
}

}  // namespace mrtumor
