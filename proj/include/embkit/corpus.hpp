#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "embkit/common.hpp"

namespace embkit {

struct Document {
  std::string id;
  std::string title;
  std::string text;
  bool operator==(const Document&) const = default;
};

struct Query {
  std::string id;
  std::string text;
  bool operator==(const Query&) const = default;
};

/// query id -> doc id -> grade. Ordered maps keep iteration deterministic.
using Qrels = std::map<std::string, std::map<std::string, int>>;

/// Anchor/positive/negative training example. NLI data stores the
/// contradiction sentence as the negative.
struct Triplet {
  std::string anchor;
  std::string positive;
  std::optional<std::string> negative;
  bool operator==(const Triplet&) const = default;
};

/// STS pair. gold_score is the raw 0..5 score divided by 5.
struct ScoredPair {
  std::string sentence_a;
  std::string sentence_b;
  double gold_score = 0.0;
  bool operator==(const ScoredPair&) const = default;
};

/// STS gold scores are rescaled from [0, 5] by this divisor at ingestion.
inline constexpr double kStsScoreScale = 5.0;

class Corpus {
 public:
  Corpus() = default;

  /// Throws on a duplicate or empty id.
  void add(Document doc);

  std::size_t size() const { return docs_.size(); }
  bool empty() const { return docs_.empty(); }
  const Document& operator[](std::size_t i) const { return docs_[i]; }
  const std::vector<Document>& documents() const { return docs_; }
  std::optional<std::size_t> find(const std::string& id) const;

  auto begin() const { return docs_.begin(); }
  auto end() const { return docs_.end(); }

  bool operator==(const Corpus& other) const { return docs_ == other.docs_; }

 private:
  std::vector<Document> docs_;
  std::unordered_map<std::string, std::size_t> index_;
};

Corpus parse_corpus(const std::filesystem::path& path);
std::vector<Query> parse_queries(const std::filesystem::path& path);
Qrels parse_qrels(const std::filesystem::path& path);
std::vector<Triplet> parse_triplets(const std::filesystem::path& path);
std::vector<ScoredPair> parse_sts_pairs(const std::filesystem::path& path);

// String-level parsers; `source` names the input in error messages.
Corpus parse_corpus_text(const std::string& content, const std::string& source = "<memory>");
std::vector<Query> parse_queries_text(const std::string& content, const std::string& source = "<memory>");
Qrels parse_qrels_text(const std::string& content, const std::string& source = "<memory>");
std::vector<Triplet> parse_triplets_text(const std::string& content, const std::string& source = "<memory>");
std::vector<ScoredPair> parse_sts_text(const std::string& content, const std::string& source = "<memory>");

std::string serialize_corpus(const Corpus& corpus);
std::string serialize_queries(const std::vector<Query>& queries);
std::string serialize_qrels(const Qrels& qrels);
std::string serialize_triplets(const std::vector<Triplet>& triplets);
/// Writes the score back on the original 0..5 scale.
std::string serialize_sts_pairs(const std::vector<ScoredPair>& pairs);

/// Query ids whose judgments are all zero.
std::vector<std::string> queries_without_relevant(const Qrels& qrels);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

struct SynthConfig {
  std::uint64_t seed = 42;
  std::size_t n_topics = 5;
  std::size_t docs_per_topic = 10;
  std::size_t queries_per_topic = 4;
};

/// Desk-scale dataset with a retrieval part (topic-structured corpus,
/// evaluation queries, qrels, training triplets) and two general-language
/// parts for the earlier pipeline stages (NLI-style triplets and STS pairs)
/// that use only the shared filler vocabulary.
struct SynthDataset {
  Corpus corpus;
  std::vector<Query> queries;
  Qrels qrels;
  std::vector<Triplet> triplets;
  std::vector<Triplet> nli_triplets;
  std::vector<ScoredPair> sts_pairs;
  /// topic index -> its keyword vocabulary; disjoint across topics.
  std::vector<std::vector<std::string>> topic_keywords;
  std::vector<std::string> filler_words;
};

SynthDataset synth_retrieval_dataset(const SynthConfig& config);

}  // namespace embkit
