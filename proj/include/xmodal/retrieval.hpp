#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xmodal/common.hpp"
#include "xmodal/ontology.hpp"
#include "xmodal/store.hpp"

namespace xmodal {

struct Neighbor {
  std::size_t index;
  double distance;
};

/// The k candidates (rows) nearest to `query` by cosine distance, ascending, ties broken by
/// lower row index. k is clamped to the candidate count.
std::vector<Neighbor> retrieve_top_k(const Eigen::Ref<const Vector>& query, const Eigen::Ref<const Matrix>& candidates,
                                     int k = 30);

/// Linear-gain NDCG: sum rel_i / log2(i + 1) over the first k ranked items, normalized by the
/// same sum over the k largest relevances in `ideal_pool`. nullopt when that ideal is 0.
std::optional<double> ndcg_at_k(std::span<const int> ranked_relevances, std::span<const int> ideal_pool, int k = 30);

enum class Direction { kAudioToImage, kImageToAudio };
std::string_view to_string(Direction d);

struct RankedList {
  std::string query_id;
  std::vector<std::string> candidate_ids;
  std::vector<double> distances;
  std::vector<int> relevances;
};

struct NdcgReport {
  Direction direction = Direction::kAudioToImage;
  std::vector<std::string> query_ids;
  std::vector<std::optional<double>> ndcg;  // nullopt = skipped
  double mean_ndcg = 0.0;                   // over non-skipped queries
  std::size_t skipped = 0;
};

struct CrossModalReport {
  NdcgReport audio_to_image;
  NdcgReport image_to_audio;
};

/// Every row of each store queries the whole pool of the other store.
CrossModalReport cross_modal_eval(const EmbeddingStore& audio, const EmbeddingStore& image, const Ontology& ontology,
                                  const RelevanceConfig& cfg, int k = 30);

/// Same scoring, but each query's ranking is a seeded random permutation of the pool.
CrossModalReport random_baseline_eval(const EmbeddingStore& audio, const EmbeddingStore& image,
                                      const Ontology& ontology, const RelevanceConfig& cfg, int k,
                                      std::uint64_t seed);

/// Ranked list for one query row of `source` against `target`.
RankedList rank_query(const EmbeddingStore& source, std::size_t query_row, const EmbeddingStore& target,
                      const RelevanceScorer& scorer, int k = 30);

void write_ndcg_csv(const CrossModalReport& report, const std::filesystem::path& path);

}  // namespace xmodal
