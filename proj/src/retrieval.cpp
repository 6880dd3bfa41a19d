#include "xmodal/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "xmodal/error.hpp"
#include "xmodal/parallel.hpp"

namespace xmodal {

std::vector<Neighbor> retrieve_top_k(const Eigen::Ref<const Vector>& query, const Eigen::Ref<const Matrix>& candidates,
                                     int k) {
  if (candidates.cols() != query.size())
    throw Error(ErrorCode::kDimMismatch, "query and candidate dims differ");
  const auto m = static_cast<std::size_t>(candidates.rows());
  std::vector<Neighbor> all(m);
  for (std::size_t i = 0; i < m; ++i)
    all[i] = {i, cosine_distance(query, candidates.row(static_cast<Eigen::Index>(i)).transpose())};
  const std::size_t keep = std::min<std::size_t>(m, static_cast<std::size_t>(std::max(k, 0)));
  auto closer = [](const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), closer);
  all.resize(keep);
  return all;
}

std::optional<double> ndcg_at_k(std::span<const int> ranked, std::span<const int> ideal_pool, int k) {
  auto check = [](std::span<const int> values) {
    for (int r : values)
      if (r < 0) throw Error(ErrorCode::kDomain, "negative relevance");
  };
  check(ranked);
  check(ideal_pool);
  auto dcg = [k](auto begin, auto end) {
    double sum = 0.0;
    int pos = 1;
    for (auto it = begin; it != end && pos <= k; ++it, ++pos) sum += *it / std::log2(pos + 1.0);
    return sum;
  };
  std::vector<int> ideal(ideal_pool.begin(), ideal_pool.end());
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  const double idcg = dcg(ideal.begin(), ideal.end());
  if (idcg <= 0.0) return std::nullopt;
  return dcg(ranked.begin(), ranked.end()) / idcg;
}

std::string_view to_string(Direction d) { return d == Direction::kAudioToImage ? "audio_to_image" : "image_to_audio"; }

namespace {

void check_joint(const EmbeddingStore& audio, const EmbeddingStore& image) {
  if (audio.dim() != image.dim())
    throw Error(ErrorCode::kDimMismatch, "stores are not in one space: dims " + std::to_string(audio.dim()) + " vs " +
                                             std::to_string(image.dim()));
}

// `order(q)` yields the ranked candidate rows for query q (only the first k are read).
template <typename OrderFn>
NdcgReport score_direction(Direction dir, const EmbeddingStore& source, const EmbeddingStore& target,
                           const RelevanceScorer& scorer, int k, OrderFn&& order) {
  NdcgReport report;
  report.direction = dir;
  const std::size_t n = source.size();
  report.query_ids.resize(n);
  report.ndcg.resize(n);
  parallel_for(n, [&](std::size_t q) {
    std::vector<int> pool(target.size());
    for (std::size_t c = 0; c < target.size(); ++c) pool[c] = scorer(source.metas[q].labels, target.metas[c].labels);
    const std::vector<std::size_t> ranked_rows = order(q);
    std::vector<int> ranked;
    for (std::size_t i = 0; i < ranked_rows.size() && static_cast<int>(i) < k; ++i) ranked.push_back(pool[ranked_rows[i]]);
    report.query_ids[q] = source.metas[q].sample_id;
    report.ndcg[q] = ndcg_at_k(ranked, pool, k);
  });
  double sum = 0.0;
  std::size_t scored = 0;
  for (const auto& v : report.ndcg) {
    if (v) {
      sum += *v;
      ++scored;
    } else {
      ++report.skipped;
    }
  }
  report.mean_ndcg = scored == 0 ? 0.0 : sum / static_cast<double>(scored);
  return report;
}

NdcgReport nearest_direction(Direction dir, const EmbeddingStore& source, const EmbeddingStore& target,
                             const RelevanceScorer& scorer, int k) {
  const Matrix pool = target.matrix.to_matrix();
  return score_direction(dir, source, target, scorer, k, [&](std::size_t q) {
    std::vector<std::size_t> rows;
    for (const auto& nb : retrieve_top_k(source.matrix.row_vector(q), pool, k)) rows.push_back(nb.index);
    return rows;
  });
}

NdcgReport shuffled_direction(Direction dir, const EmbeddingStore& source, const EmbeddingStore& target,
                              const RelevanceScorer& scorer, int k, std::uint64_t seed) {
  return score_direction(dir, source, target, scorer, k, [&](std::size_t q) {
    std::vector<std::size_t> rows(target.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    std::mt19937_64 rng(seed * 1000003ULL + q);
    std::shuffle(rows.begin(), rows.end(), rng);
    return rows;
  });
}

}  // namespace

CrossModalReport cross_modal_eval(const EmbeddingStore& audio, const EmbeddingStore& image, const Ontology& ontology,
                                  const RelevanceConfig& cfg, int k) {
  check_joint(audio, image);
  RelevanceScorer scorer(ontology, cfg);
  return {nearest_direction(Direction::kAudioToImage, audio, image, scorer, k),
          nearest_direction(Direction::kImageToAudio, image, audio, scorer, k)};
}

CrossModalReport random_baseline_eval(const EmbeddingStore& audio, const EmbeddingStore& image,
                                      const Ontology& ontology, const RelevanceConfig& cfg, int k,
                                      std::uint64_t seed) {
  RelevanceScorer scorer(ontology, cfg);
  return {shuffled_direction(Direction::kAudioToImage, audio, image, scorer, k, seed),
          shuffled_direction(Direction::kImageToAudio, image, audio, scorer, k, seed + 1)};
}

RankedList rank_query(const EmbeddingStore& source, std::size_t query_row, const EmbeddingStore& target,
                      const RelevanceScorer& scorer, int k) {
  check_joint(source, target);
  RankedList out;
  out.query_id = source.metas.at(query_row).sample_id;
  for (const auto& nb : retrieve_top_k(source.matrix.row_vector(query_row), target.matrix.to_matrix(), k)) {
    out.candidate_ids.push_back(target.metas[nb.index].sample_id);
    out.distances.push_back(nb.distance);
    out.relevances.push_back(scorer(source.metas[query_row].labels, target.metas[nb.index].labels));
  }
  return out;
}

void write_ndcg_csv(const CrossModalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.precision(17);
  out << "direction,query_id,ndcg,skipped\n";
  for (const NdcgReport* r : {&report.audio_to_image, &report.image_to_audio}) {
    for (std::size_t i = 0; i < r->query_ids.size(); ++i) {
      out << to_string(r->direction) << ',' << r->query_ids[i] << ',';
      if (r->ndcg[i]) out << *r->ndcg[i] << ",0\n";
      else out << ",1\n";
    }
  }
  for (const NdcgReport* r : {&report.audio_to_image, &report.image_to_audio})
    out << to_string(r->direction) << ",MEAN," << r->mean_ndcg << ',' << r->skipped << '\n';
}

}  // namespace xmodal
