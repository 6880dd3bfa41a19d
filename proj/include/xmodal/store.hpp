#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xmodal/common.hpp"

namespace xmodal {

class Ontology;

struct SampleMeta {
  std::string sample_id;
  std::string clip_id;  // audio and image records of one clip share it
  Modality modality = Modality::kAudio;
  std::vector<std::string> labels;  // ontology ids
  Split split = Split::kTrain;
  std::string embedding_model;

  bool operator==(const SampleMeta&) const = default;
};

/// Row-major f32 matrix; row i belongs to manifest line i.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::uint32_t dim, std::vector<float> values);
  EmbeddingMatrix(std::uint32_t dim, std::uint64_t count);

  static EmbeddingMatrix from_rows(const Eigen::Ref<const Matrix>& rows);

  std::uint32_t dim() const { return dim_; }
  std::uint64_t count() const { return dim_ == 0 ? 0 : values_.size() / dim_; }

  std::span<const float> row(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }
  std::span<float> row(std::size_t i) { return {values_.data() + i * dim_, dim_}; }
  const std::vector<float>& values() const { return values_; }

  Vector row_vector(std::size_t i) const;
  /// Copies all rows into a count x dim double matrix.
  Matrix to_matrix() const;

  bool operator==(const EmbeddingMatrix&) const = default;

 private:
  std::uint32_t dim_ = 0;
  std::vector<float> values_;
};

struct EmbeddingStore {
  std::vector<SampleMeta> metas;
  EmbeddingMatrix matrix;

  std::size_t size() const { return metas.size(); }
  std::uint32_t dim() const { return matrix.dim(); }
};

/// Checks count alignment, unique sample ids, non-empty labels, finite values, and the
/// declared dimension of known embedding models. Throws Error.
void validate_store(const std::vector<SampleMeta>& metas, const EmbeddingMatrix& matrix);
/// Additionally checks that every label resolves against `ontology`.
void validate_labels(const std::vector<SampleMeta>& metas, const Ontology& ontology);

inline constexpr const char* kManifestFile = "manifest.jsonl";
inline constexpr const char* kEmbeddingsFile = "embeddings.xmeb";

void write_store(const std::vector<SampleMeta>& metas, const EmbeddingMatrix& matrix,
                 const std::filesystem::path& dir);
inline void write_store(const EmbeddingStore& store, const std::filesystem::path& dir) {
  write_store(store.metas, store.matrix, dir);
}
EmbeddingStore read_store(const std::filesystem::path& dir);

/// Rows of a store selected by index; meta and matrix rows stay aligned.
class StoreView {
 public:
  StoreView(const EmbeddingStore& store, std::vector<std::size_t> rows)
      : store_(&store), rows_(std::move(rows)) {}

  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }
  const SampleMeta& meta(std::size_t i) const { return store_->metas[rows_[i]]; }
  std::span<const float> row(std::size_t i) const { return store_->matrix.row(rows_[i]); }
  const std::vector<std::size_t>& rows() const { return rows_; }
  std::uint32_t dim() const { return store_->dim(); }

  Matrix to_matrix() const;
  EmbeddingStore materialize() const;

 private:
  const EmbeddingStore* store_;
  std::vector<std::size_t> rows_;
};

StoreView filter_split(const EmbeddingStore& store, Split split);
StoreView all_rows(const EmbeddingStore& store);

struct PairedDataset {
  EmbeddingStore audio;
  EmbeddingStore image;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (audio row, image row)
};

/// Matches rows on clip_id; pairs are sorted by clip_id.
PairedDataset pair_by_clip(EmbeddingStore audio, EmbeddingStore image);

}  // namespace xmodal
