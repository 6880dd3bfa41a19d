#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace xmodal {

enum class ErrorCode {
  kFormat,             // shape / count mismatch in data being written or parsed
  kValidation,         // invariant violated (NaN, empty labels, unknown label)
  kUnsupportedFormat,  // wrong magic or version
  kCorruptStore,       // payload length disagrees with header
  kAmbiguousPair,      // duplicate clip id within one modality
  kReference,          // dangling ontology child id
  kDuplicate,          // duplicate ontology id
  kLookup,             // unknown label / class
  kDimMismatch,
  kConfig,
  kDivergence,         // non-finite loss during training
  kDegenerateFit,      // e.g. single-class forest input
  kDomain,             // argument outside mathematical domain
  kIo,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace xmodal
