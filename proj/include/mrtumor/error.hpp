#pragma once

#include <stdexcept>
#include <string>

namespace mrtumor {

enum class ErrorCode {
  kBadMagic = 1,
  kUnsupportedDatatype,
  kTruncatedFile,
  kBadHeader,
  kNonFinite,
  kIoFailure,
  kInvalidArgument,
  kInvalidSpec,
  kDimensionMismatch,
  kBadDims,
  kWrongSliceCount,
  kDegenerateInput,
  kSingleClass,
  kEmptyCounts,
  kNoPositives,
  kNoNegatives,
  kMissingModel,
  kMissingTemplate,
  kConfigInvalid,
  kBadModel,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace mrtumor
