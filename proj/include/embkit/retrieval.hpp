#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "embkit/common.hpp"
#include "embkit/corpus.hpp"
#include "embkit/encoder.hpp"

namespace embkit {

enum class Measure { cosine, dot, euclidean, manhattan };

inline constexpr Measure kAllMeasures[] = {Measure::cosine, Measure::dot, Measure::euclidean, Measure::manhattan};

std::string_view measure_name(Measure m);
Measure parse_measure(std::string_view name);

/// Larger is always better: euclidean and manhattan return negated distances.
/// All sums accumulate in double.
double similarity(std::span<const double> u, std::span<const double> v, Measure m);
double similarity(std::span<const float> u, std::span<const float> v, Measure m);

/// Exact-search index: one unit-norm float32 row per document.
struct EmbeddingIndex {
  std::vector<std::string> ids;
  std::vector<float> vectors;  // count x dim, row-major
  std::uint32_t dim = 0;
  bool normalized = true;

  std::size_t size() const { return ids.size(); }
  std::span<const float> row(std::size_t i) const { return {vectors.data() + i * dim, dim}; }
  bool operator==(const EmbeddingIndex&) const = default;
};

struct ScoredDoc {
  std::string doc_id;
  double score = 0.0;
  bool operator==(const ScoredDoc&) const = default;
};

/// Ordered by descending score, ties by ascending doc id.
struct RankedList {
  std::string query_id;
  std::vector<ScoredDoc> items;
  bool operator==(const RankedList&) const = default;
};

/// Ranking order used everywhere: (-score, doc id).
inline bool ranks_before(const ScoredDoc& a, const ScoredDoc& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.doc_id < b.doc_id;
}

/// Text fed to the encoder for a document.
inline std::string document_text(const Document& d) { return d.title + " " + d.text; }

EmbeddingIndex build_index(const EncoderParams& params, const Corpus& corpus);

/// Keeps the first `prefix` coordinates of every row and re-normalizes.
EmbeddingIndex truncate_renorm(const EmbeddingIndex& index, std::uint32_t prefix);
std::vector<double> truncate_renorm(std::span<const double> v, std::size_t prefix);
Matrix truncate_renorm(const Matrix& m, std::size_t prefix);

std::vector<float> to_float32(std::span<const double> v);

RankedList top_k(const EmbeddingIndex& index, std::span<const float> query, std::size_t k, Measure m,
                 std::string query_id = {});

/// Encodes each query and searches the index. When the index is narrower
/// than the encoder (a truncated index), query embeddings are truncated and
/// re-normalized to match. Uses the OpenMP kernels.
std::vector<RankedList> search_queries(const EncoderParams& params, const EmbeddingIndex& index,
                                       const std::vector<Query>& queries, std::size_t k, Measure m);

inline constexpr std::uint32_t kIndexVersion = 1;
std::string save_index(const EmbeddingIndex& index);
EmbeddingIndex load_index(std::string_view bytes);
void save_index_file(const EmbeddingIndex& index, const std::filesystem::path& path);
EmbeddingIndex load_index_file(const std::filesystem::path& path);

}  // namespace embkit
