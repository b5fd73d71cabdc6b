#include "embkit/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "embkit/binio.hpp"
#include "embkit/kernels.hpp"

namespace embkit {

std::string_view measure_name(Measure m) {
  switch (m) {
    case Measure::cosine: return "cosine";
    case Measure::dot: return "dot";
    case Measure::euclidean: return "euclidean";
    case Measure::manhattan: return "manhattan";
  }
  return "?";
}

Measure parse_measure(std::string_view name) {
  for (Measure m : kAllMeasures)
    if (measure_name(m) == name) return m;
  throw Error("unknown similarity measure '" + std::string(name) + "'");
}

namespace {

template <typename T>
double similarity_impl(std::span<const T> u, std::span<const T> v, Measure m) {
  if (u.size() != v.size())
    throw Error("similarity: dimension mismatch (" + std::to_string(u.size()) + " vs " + std::to_string(v.size()) + ")");
  switch (m) {
    case Measure::dot:
    case Measure::cosine: {
      double uv = 0.0, uu = 0.0, vv = 0.0;
      for (std::size_t i = 0; i < u.size(); ++i) {
        const double a = u[i], b = v[i];
        uv += a * b;
        uu += a * a;
        vv += b * b;
      }
      if (m == Measure::dot) return uv;
      if (uu == 0.0 || vv == 0.0) throw Error("similarity: cosine of a zero-norm vector");
      return uv / (std::sqrt(uu) * std::sqrt(vv));
    }
    case Measure::euclidean: {
      double s = 0.0;
      for (std::size_t i = 0; i < u.size(); ++i) {
        const double d = static_cast<double>(u[i]) - static_cast<double>(v[i]);
        s += d * d;
      }
      return -std::sqrt(s);
    }
    case Measure::manhattan: {
      double s = 0.0;
      for (std::size_t i = 0; i < u.size(); ++i) s += std::abs(static_cast<double>(u[i]) - static_cast<double>(v[i]));
      return -s;
    }
  }
  return 0.0;
}

}  // namespace

double similarity(std::span<const double> u, std::span<const double> v, Measure m) { return similarity_impl(u, v, m); }
double similarity(std::span<const float> u, std::span<const float> v, Measure m) { return similarity_impl(u, v, m); }

std::vector<float> to_float32(std::span<const double> v) {
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
  return out;
}

EmbeddingIndex build_index(const EncoderParams& params, const Corpus& corpus) {
  if (corpus.empty()) throw Error("build_index: corpus is empty");
  std::vector<std::string> texts;
  texts.reserve(corpus.size());
  for (const auto& d : corpus) texts.push_back(document_text(d));
  Matrix emb;
  try {
    emb = kernels::omp::embed_batch(params, texts);
  } catch (const kernels::BatchItemError& e) {
    throw Error("build_index: document " + corpus[e.index()].id + ": " + e.what());
  }
  EmbeddingIndex index;
  index.dim = params.dim;
  index.ids.reserve(corpus.size());
  for (const auto& d : corpus) index.ids.push_back(d.id);
  index.vectors = to_float32(emb.data);
  return index;
}

std::vector<double> truncate_renorm(std::span<const double> v, std::size_t prefix) {
  if (prefix < 1 || prefix > v.size())
    throw Error("truncate_renorm: prefix " + std::to_string(prefix) + " outside [1, " + std::to_string(v.size()) + "]");
  std::vector<double> out(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(prefix));
  const double n = l2_norm(out);
  if (!(n >= kDegenerateNorm)) throw Error("truncate_renorm: prefix norm below 1e-12");
  // Full-width input that is already unit comes back untouched.
  if (prefix == v.size() && std::abs(n - 1.0) <= 1e-12) return out;
  for (double& x : out) x /= n;
  return out;
}

Matrix truncate_renorm(const Matrix& m, std::size_t prefix) {
  Matrix out(m.rows, prefix);
  for (std::size_t r = 0; r < m.rows; ++r) {
    try {
      auto row = truncate_renorm(m.row(r), prefix);
      std::copy(row.begin(), row.end(), out.row(r).begin());
    } catch (const Error& e) {
      throw Error("row " + std::to_string(r) + ": " + e.what());
    }
  }
  return out;
}

EmbeddingIndex truncate_renorm(const EmbeddingIndex& index, std::uint32_t prefix) {
  if (prefix < 1 || prefix > index.dim)
    throw Error("truncate_renorm: prefix " + std::to_string(prefix) + " outside [1, " + std::to_string(index.dim) + "]");
  if (prefix == index.dim) return index;
  EmbeddingIndex out;
  out.ids = index.ids;
  out.dim = prefix;
  out.vectors.resize(index.size() * prefix);
  for (std::size_t r = 0; r < index.size(); ++r) {
    auto row = index.row(r);
    double sq = 0.0;
    for (std::size_t i = 0; i < prefix; ++i) sq += static_cast<double>(row[i]) * row[i];
    const double n = std::sqrt(sq);
    if (!(n >= kDegenerateNorm)) throw Error("truncate_renorm: row " + index.ids[r] + " has prefix norm below 1e-12");
    for (std::size_t i = 0; i < prefix; ++i) out.vectors[r * prefix + i] = static_cast<float>(row[i] / n);
  }
  return out;
}

RankedList top_k(const EmbeddingIndex& index, std::span<const float> query, std::size_t k, Measure m,
                 std::string query_id) {
  if (k < 1) throw Error("top_k: k must be >= 1");
  if (index.size() == 0) throw Error("top_k: index is empty");
  if (query.size() != index.dim)
    throw Error("top_k: query has dim " + std::to_string(query.size()) + ", index has " + std::to_string(index.dim));
  std::vector<ScoredDoc> scored;
  scored.reserve(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) scored.push_back({index.ids[i], similarity(index.row(i), query, m)});
  const std::size_t n = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), ranks_before);
  scored.resize(n);
  return {std::move(query_id), std::move(scored)};
}

std::vector<RankedList> search_queries(const EncoderParams& params, const EmbeddingIndex& index,
                                       const std::vector<Query>& queries, std::size_t k, Measure m) {
  if (index.dim > params.dim) throw Error("search: index is wider than the encoder output");
  std::vector<std::string> texts;
  texts.reserve(queries.size());
  for (const auto& q : queries) texts.push_back(q.text);
  Matrix emb;
  try {
    emb = kernels::omp::embed_batch(params, texts);
  } catch (const kernels::BatchItemError& e) {
    throw Error("search: query " + queries[e.index()].id + ": " + e.what());
  }
  kernels::QueryBatch batch;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    batch.ids.push_back(queries[i].id);
    batch.vectors.push_back(to_float32(truncate_renorm(emb.row(i), index.dim)));
  }
  return kernels::omp::search_batch(index, batch, k, m);
}

namespace {
constexpr std::string_view kIndexMagic = "TE4R";
constexpr double kUnitTolerance = 1e-5;
}  // namespace

std::string save_index(const EmbeddingIndex& index) {
  if (index.vectors.size() != index.size() * index.dim) throw Error("save_index: vector payload does not match ids/dim");
  binio::Writer w;
  w.bytes(kIndexMagic);
  w.le<std::uint32_t>(kIndexVersion);
  w.le<std::uint32_t>(index.dim);
  w.le<std::uint64_t>(index.size());
  for (const auto& id : index.ids) {
    if (id.size() > UINT16_MAX) throw Error("save_index: id longer than 65535 bytes");
    w.le<std::uint16_t>(static_cast<std::uint16_t>(id.size()));
    w.bytes(id);
  }
  for (float v : index.vectors) w.le<float>(v);
  return w.take();
}

EmbeddingIndex load_index(std::string_view bytes) {
  binio::Reader r(bytes);
  if (bytes.size() < 4 || r.bytes(4, "magic") != kIndexMagic) throw Error("index: bad magic");
  const auto version = r.le<std::uint32_t>("version");
  if (version != kIndexVersion) throw Error("index: unsupported version " + std::to_string(version));
  EmbeddingIndex index;
  index.dim = r.le<std::uint32_t>("dim");
  if (index.dim == 0) throw Error("index: dim must be >= 1");
  const auto count = r.le<std::uint64_t>("count");
  // Each id needs at least its 2-byte length prefix.
  if (count > r.remaining() / 2) throw Error("index: length mismatch (count exceeds payload)");
  std::unordered_set<std::string> seen;
  index.ids.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = r.le<std::uint16_t>("id length");
    std::string id(r.bytes(len, "id"));
    if (!seen.insert(id).second) throw Error("index: duplicate id " + id);
    index.ids.push_back(std::move(id));
  }
  const std::uint64_t expected = count * index.dim * 4;
  if (r.remaining() != expected)
    throw Error("index: length mismatch (expected " + std::to_string(expected) + " vector bytes, found " +
                std::to_string(r.remaining()) + ")");
  index.vectors.resize(count * index.dim);
  for (auto& v : index.vectors) v = r.le<float>("vectors");
  for (std::size_t i = 0; i < index.size(); ++i) {
    auto row = index.row(i);
    double sq = 0.0;
    for (float x : row) sq += static_cast<double>(x) * x;
    if (std::abs(std::sqrt(sq) - 1.0) > kUnitTolerance) throw Error("index: row " + index.ids[i] + " is not unit norm");
  }
  return index;
}

void save_index_file(const EmbeddingIndex& index, const std::filesystem::path& path) {
  write_file(path, save_index(index));
}

EmbeddingIndex load_index_file(const std::filesystem::path& path) { return load_index(read_file(path)); }

}  // namespace embkit
