#include "xmodal/store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "xmodal/error.hpp"
#include "xmodal/ontology.hpp"

namespace xmodal {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {

constexpr char kMagic[4] = {'X', 'M', 'E', 'B'};
constexpr std::uint16_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 2 + 4 + 8;

template <typename T>
void put(std::string& buf, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  buf.append(bytes, sizeof(T));
}

template <typename T>
T get(const std::string& buf, std::size_t offset) {
  T value;
  std::memcpy(&value, buf.data() + offset, sizeof(T));
  return value;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorCode::kIo, "short write to " + path.string());
}

nlohmann::json meta_to_json(const SampleMeta& m) {
  return {{"sample_id", m.sample_id},
          {"clip_id", m.clip_id},
          {"modality", std::string(to_string(m.modality))},
          {"labels", m.labels},
          {"split", std::string(to_string(m.split))},
          {"embedding_model", m.embedding_model}};
}

SampleMeta meta_from_json(const nlohmann::json& j, std::size_t line) {
  static const std::set<std::string> kKeys = {"sample_id", "clip_id", "modality",
                                              "labels",    "split",   "embedding_model"};
  const std::string where = "manifest line " + std::to_string(line + 1);
  if (!j.is_object()) throw Error(ErrorCode::kFormat, where + " is not an object");
  std::set<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.insert(k);
  if (keys != kKeys) throw Error(ErrorCode::kFormat, where + " has wrong key set");
  try {
    SampleMeta m;
    m.sample_id = j.at("sample_id").get<std::string>();
    m.clip_id = j.at("clip_id").get<std::string>();
    m.modality = parse_modality(j.at("modality").get<std::string>());
    m.labels = j.at("labels").get<std::vector<std::string>>();
    m.split = parse_split(j.at("split").get<std::string>());
    m.embedding_model = j.at("embedding_model").get<std::string>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, where + ": " + e.what());
  }
}

}  // namespace

EmbeddingMatrix::EmbeddingMatrix(std::uint32_t dim, std::vector<float> values)
    : dim_(dim), values_(std::move(values)) {
  if (dim_ == 0) throw Error(ErrorCode::kFormat, "embedding dim must be positive");
  if (values_.size() % dim_ != 0)
    throw Error(ErrorCode::kFormat, "value count is not a multiple of dim");
}

EmbeddingMatrix::EmbeddingMatrix(std::uint32_t dim, std::uint64_t count)
    : EmbeddingMatrix(dim, std::vector<float>(dim * count, 0.0f)) {}

EmbeddingMatrix EmbeddingMatrix::from_rows(const Eigen::Ref<const Matrix>& rows) {
  EmbeddingMatrix m(static_cast<std::uint32_t>(rows.cols()), static_cast<std::uint64_t>(rows.rows()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i)
    for (Eigen::Index j = 0; j < rows.cols(); ++j)
      m.values_[i * m.dim_ + j] = static_cast<float>(rows(i, j));
  return m;
}

Vector EmbeddingMatrix::row_vector(std::size_t i) const {
  auto r = row(i);
  Vector v(dim_);
  for (std::uint32_t j = 0; j < dim_; ++j) v[j] = r[j];
  return v;
}

Matrix EmbeddingMatrix::to_matrix() const {
  Matrix out(static_cast<Eigen::Index>(count()), dim_);
  for (std::size_t i = 0; i < count(); ++i) out.row(static_cast<Eigen::Index>(i)) = row_vector(i).transpose();
  return out;
}

void validate_store(const std::vector<SampleMeta>& metas, const EmbeddingMatrix& matrix) {
  if (metas.size() != matrix.count())
    throw Error(ErrorCode::kFormat, "manifest has " + std::to_string(metas.size()) +
                                        " records but matrix has " + std::to_string(matrix.count()) + " rows");
  std::unordered_set<std::string> ids;
  for (std::size_t i = 0; i < metas.size(); ++i) {
    const auto& m = metas[i];
    if (m.sample_id.empty()) throw Error(ErrorCode::kValidation, "row " + std::to_string(i) + ": empty sample_id");
    if (!ids.insert(m.sample_id).second)
      throw Error(ErrorCode::kValidation, "duplicate sample_id '" + m.sample_id + "'");
    if (m.labels.empty()) throw Error(ErrorCode::kValidation, "row " + std::to_string(i) + ": no labels");
    const std::uint32_t want = declared_dim(m.embedding_model);
    if (want != 0 && want != matrix.dim())
      throw Error(ErrorCode::kValidation, "row " + std::to_string(i) + ": " + m.embedding_model + " expects dim " +
                                              std::to_string(want) + ", store has " + std::to_string(matrix.dim()));
  }
  for (std::size_t i = 0; i < matrix.count(); ++i)
    for (float v : matrix.row(i))
      if (!std::isfinite(v)) throw Error(ErrorCode::kValidation, "non-finite value in row " + std::to_string(i));
}

void validate_labels(const std::vector<SampleMeta>& metas, const Ontology& ontology) {
  for (std::size_t i = 0; i < metas.size(); ++i)
    for (const auto& label : metas[i].labels)
      if (!ontology.contains(label))
        throw Error(ErrorCode::kValidation, "row " + std::to_string(i) + ": unknown label '" + label + "'");
}

void write_store(const std::vector<SampleMeta>& metas, const EmbeddingMatrix& matrix,
                 const std::filesystem::path& dir) {
  validate_store(metas, matrix);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());

  std::string manifest;
  for (const auto& m : metas) {
    manifest += meta_to_json(m).dump();
    manifest += '\n';
  }
  write_file(dir / kManifestFile, manifest);

  std::string payload;
  payload.reserve(kHeaderBytes + matrix.values().size() * sizeof(float));
  payload.append(kMagic, 4);
  put<std::uint16_t>(payload, kVersion);
  put<std::uint32_t>(payload, matrix.dim());
  put<std::uint64_t>(payload, matrix.count());
  payload.append(reinterpret_cast<const char*>(matrix.values().data()), matrix.values().size() * sizeof(float));
  write_file(dir / kEmbeddingsFile, payload);
}

EmbeddingStore read_store(const std::filesystem::path& dir) {
  const std::string payload = read_file(dir / kEmbeddingsFile);
  if (payload.size() < 4 || std::memcmp(payload.data(), kMagic, 4) != 0)
    throw Error(ErrorCode::kUnsupportedFormat, (dir / kEmbeddingsFile).string() + ": bad magic");
  if (payload.size() < kHeaderBytes) throw Error(ErrorCode::kCorruptStore, "truncated header");
  const auto version = get<std::uint16_t>(payload, 4);
  if (version != kVersion)
    throw Error(ErrorCode::kUnsupportedFormat, "embeddings version " + std::to_string(version));
  const auto dim = get<std::uint32_t>(payload, 6);
  const auto count = get<std::uint64_t>(payload, 10);
  if (dim == 0) throw Error(ErrorCode::kCorruptStore, "zero dim in header");
  const std::uint64_t expected = kHeaderBytes + std::uint64_t{4} * dim * count;
  if (payload.size() != expected)
    throw Error(ErrorCode::kCorruptStore, "payload is " + std::to_string(payload.size()) + " bytes, header promises " +
                                              std::to_string(expected));
  std::vector<float> values(static_cast<std::size_t>(dim * count));
  std::memcpy(values.data(), payload.data() + kHeaderBytes, values.size() * sizeof(float));

  EmbeddingStore store;
  store.matrix = EmbeddingMatrix(dim, std::move(values));

  std::istringstream manifest(read_file(dir / kManifestFile));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(manifest, line)) {
    if (line.empty()) {
      ++line_no;
      continue;
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::kFormat, "manifest line " + std::to_string(line_no + 1) + ": " + e.what());
    }
    store.metas.push_back(meta_from_json(j, line_no));
    ++line_no;
  }
  validate_store(store.metas, store.matrix);
  return store;
}

Matrix StoreView::to_matrix() const {
  Matrix out(static_cast<Eigen::Index>(rows_.size()), dim());
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    auto r = row(i);
    for (std::uint32_t j = 0; j < dim(); ++j) out(static_cast<Eigen::Index>(i), j) = r[j];
  }
  return out;
}

EmbeddingStore StoreView::materialize() const {
  EmbeddingStore out;
  std::vector<float> values;
  values.reserve(rows_.size() * dim());
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    out.metas.push_back(meta(i));
    auto r = row(i);
    values.insert(values.end(), r.begin(), r.end());
  }
  out.matrix = EmbeddingMatrix(dim(), std::move(values));
  return out;
}

StoreView filter_split(const EmbeddingStore& store, Split split) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < store.metas.size(); ++i)
    if (store.metas[i].split == split) rows.push_back(i);
  return {store, std::move(rows)};
}

StoreView all_rows(const EmbeddingStore& store) {
  std::vector<std::size_t> rows(store.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return {store, std::move(rows)};
}

PairedDataset pair_by_clip(EmbeddingStore audio, EmbeddingStore image) {
  auto index_clips = [](const EmbeddingStore& s, std::string_view which) {
    std::map<std::string, std::size_t> by_clip;
    for (std::size_t i = 0; i < s.metas.size(); ++i)
      if (!by_clip.emplace(s.metas[i].clip_id, i).second)
        throw Error(ErrorCode::kAmbiguousPair,
                    std::string(which) + " store has clip_id '" + s.metas[i].clip_id + "' more than once");
    return by_clip;
  };
  const auto audio_clips = index_clips(audio, "audio");
  const auto image_clips = index_clips(image, "image");

  PairedDataset out;
  for (const auto& [clip, a] : audio_clips) {
    auto it = image_clips.find(clip);
    if (it == image_clips.end()) continue;
    const auto& ma = audio.metas[a];
    const auto& mi = image.metas[it->second];
    if (ma.labels != mi.labels || ma.split != mi.split)
      throw Error(ErrorCode::kValidation, "clip '" + clip + "' has mismatched labels or split across modalities");
    out.pairs.emplace_back(a, it->second);
  }
  out.audio = std::move(audio);
  out.image = std::move(image);
  return out;
}

}  // namespace xmodal
