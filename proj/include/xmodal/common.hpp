#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace xmodal {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Modality : std::uint8_t { kAudio, kImage };
enum class Split : std::uint8_t { kTrain, kVal, kTest };

std::string_view to_string(Modality m);
std::string_view to_string(Split s);
Modality parse_modality(std::string_view text);
Split parse_split(std::string_view text);

inline Modality other(Modality m) { return m == Modality::kAudio ? Modality::kImage : Modality::kAudio; }

/// Output dimension of each known pre-trained embedding model; 0 when the tag is unknown
/// (synthetic or projected stores), in which case any positive dim is accepted.
std::uint32_t declared_dim(std::string_view embedding_model);

/// The 18 classification classes in canonical (alphabetical) order. Class indices used by
/// the forest and all CSV outputs refer to positions in this list.
inline constexpr std::array<std::string_view, 18> kInstrumentClasses = {
    "accordion", "banjo",    "cello",     "clarinet",    "cymbals",  "drums",
    "flute",     "guitar",   "mandolin",  "organ",       "piano",    "saxophone",
    "synthesizer", "trombone", "trumpet", "ukulele",     "violin",   "voice"};

/// Index into kInstrumentClasses, or -1.
int class_index(std::string_view name);

/// 1 - cos(u, v) with the norm product guarded below by 1e-12.
double cosine_distance(const Eigen::Ref<const Vector>& u, const Eigen::Ref<const Vector>& v);

inline constexpr double kCosineEps = 1e-12;
inline constexpr int kJointDim = 128;

}  // namespace xmodal
