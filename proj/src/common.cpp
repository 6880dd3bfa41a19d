#include "xmodal/common.hpp"

#include <algorithm>

#include "xmodal/error.hpp"

namespace xmodal {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kFormat: return "format error";
    case ErrorCode::kValidation: return "validation error";
    case ErrorCode::kUnsupportedFormat: return "unsupported format";
    case ErrorCode::kCorruptStore: return "corrupt store";
    case ErrorCode::kAmbiguousPair: return "ambiguous pair";
    case ErrorCode::kReference: return "reference error";
    case ErrorCode::kDuplicate: return "duplicate error";
    case ErrorCode::kLookup: return "lookup error";
    case ErrorCode::kDimMismatch: return "dimension mismatch";
    case ErrorCode::kConfig: return "config error";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kDegenerateFit: return "degenerate fit";
    case ErrorCode::kDomain: return "domain error";
    case ErrorCode::kIo: return "i/o error";
  }
  return "error";
}

std::string_view to_string(Modality m) { return m == Modality::kAudio ? "audio" : "image"; }

std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Modality parse_modality(std::string_view text) {
  if (text == "audio") return Modality::kAudio;
  if (text == "image") return Modality::kImage;
  throw Error(ErrorCode::kValidation, "unknown modality '" + std::string(text) + "'");
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "val") return Split::kVal;
  if (text == "test") return Split::kTest;
  throw Error(ErrorCode::kValidation, "unknown split '" + std::string(text) + "'");
}

std::uint32_t declared_dim(std::string_view model) {
  struct Entry {
    std::string_view tag;
    std::uint32_t dim;
  };
  static constexpr Entry kTable[] = {
      {"vgg16", 512},          {"resnet50", 2048}, {"openl3-image", 8192},
      {"vggish", 128},         {"yamnet", 1024},   {"openl3-audio", 6144},
  };
  for (const auto& e : kTable)
    if (e.tag == model) return e.dim;
  return 0;
}

int class_index(std::string_view name) {
  auto it = std::find(kInstrumentClasses.begin(), kInstrumentClasses.end(), name);
  return it == kInstrumentClasses.end() ? -1 : static_cast<int>(it - kInstrumentClasses.begin());
}

double cosine_distance(const Eigen::Ref<const Vector>& u, const Eigen::Ref<const Vector>& v) {
  const double den = std::max(u.norm() * v.norm(), kCosineEps);
  return 1.0 - u.dot(v) / den;
}

}  // namespace xmodal
