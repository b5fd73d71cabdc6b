#include "embkit/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "embkit/rng.hpp"
#include "json.hpp"

namespace embkit {

using nlohmann::json;
using nlohmann::ordered_json;

void Corpus::add(Document doc) {
  if (doc.id.empty()) throw Error("document id must be non-empty");
  if (index_.contains(doc.id)) throw Error("duplicate id " + doc.id);
  index_.emplace(doc.id, docs_.size());
  docs_.push_back(std::move(doc));
}

std::optional<std::size_t> Corpus::find(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write file: " + path.string());
  out << content;
  if (!out) throw Error("write failed: " + path.string());
}

namespace {

// Calls fn(line_number, line) for each non-blank line, 1-based, with a
// trailing '\r' removed.
template <typename Fn>
void for_each_line(const std::string& content, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string::npos) end = content.size();
    std::string_view line(content.data() + pos, end - pos);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") != std::string_view::npos) fn(line_no, line);
    pos = end + 1;
  }
}

std::string at_line(const std::string& source, std::size_t line_no) {
  return source + ": line " + std::to_string(line_no);
}

json parse_json_line(std::string_view line, const std::string& source, std::size_t line_no) {
  json obj = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (obj.is_discarded()) throw Error(at_line(source, line_no) + ": malformed JSON");
  if (!obj.is_object()) throw Error(at_line(source, line_no) + ": expected a JSON object");
  return obj;
}

std::string required_string(const json& obj, const char* key, const std::string& source, std::size_t line_no) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) throw Error(at_line(source, line_no) + ": missing field " + key);
  if (!it->is_string()) throw Error(at_line(source, line_no) + ": field " + key + " is not a string");
  return it->get<std::string>();
}

std::string optional_string(const json& obj, const char* key, const std::string& source, std::size_t line_no) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  if (!it->is_string()) throw Error(at_line(source, line_no) + ": field " + key + " is not a string");
  return it->get<std::string>();
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t tab = line.find('\t', pos);
    if (tab == std::string_view::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, tab - pos));
    pos = tab + 1;
  }
  return out;
}

}  // namespace

Corpus parse_corpus_text(const std::string& content, const std::string& source) {
  Corpus corpus;
  for_each_line(content, [&](std::size_t line_no, std::string_view line) {
    json obj = parse_json_line(line, source, line_no);
    Document doc;
    doc.id = required_string(obj, "_id", source, line_no);
    if (doc.id.empty()) throw Error(at_line(source, line_no) + ": empty _id");
    doc.title = optional_string(obj, "title", source, line_no);
    doc.text = optional_string(obj, "text", source, line_no);
    if (corpus.find(doc.id)) throw Error("duplicate id " + doc.id + " at line " + std::to_string(line_no));
    corpus.add(std::move(doc));
  });
  return corpus;
}

std::vector<Query> parse_queries_text(const std::string& content, const std::string& source) {
  std::vector<Query> queries;
  std::set<std::string> seen;
  for_each_line(content, [&](std::size_t line_no, std::string_view line) {
    json obj = parse_json_line(line, source, line_no);
    Query q{required_string(obj, "_id", source, line_no), required_string(obj, "text", source, line_no)};
    if (q.id.empty()) throw Error(at_line(source, line_no) + ": empty _id");
    if (!seen.insert(q.id).second) throw Error("duplicate id " + q.id + " at line " + std::to_string(line_no));
    queries.push_back(std::move(q));
  });
  return queries;
}

Qrels parse_qrels_text(const std::string& content, const std::string& source) {
  Qrels qrels;
  bool first = true;
  for_each_line(content, [&](std::size_t line_no, std::string_view line) {
    const bool header_candidate = first;
    first = false;
    if (header_candidate && line.starts_with("query")) return;
    auto fields = split_tabs(line);
    if (fields.size() < 3)
      throw Error(at_line(source, line_no) + ": expected 3 tab-separated fields, got " +
                  std::to_string(fields.size()));
    const auto grade_field = fields[2];
    int grade = 0;
    auto [ptr, ec] = std::from_chars(grade_field.data(), grade_field.data() + grade_field.size(), grade);
    if (ec != std::errc() || ptr != grade_field.data() + grade_field.size())
      throw Error(at_line(source, line_no) + ": non-integer grade '" + std::string(grade_field) + "'");
    if (grade < 0) throw Error(at_line(source, line_no) + ": negative grade");
    if (fields[0].empty() || fields[1].empty()) throw Error(at_line(source, line_no) + ": empty id");
    qrels[std::string(fields[0])][std::string(fields[1])] = grade;
  });
  return qrels;
}

std::vector<Triplet> parse_triplets_text(const std::string& content, const std::string& source) {
  std::vector<Triplet> out;
  for_each_line(content, [&](std::size_t line_no, std::string_view line) {
    json obj = parse_json_line(line, source, line_no);
    Triplet t;
    t.anchor = required_string(obj, "query", source, line_no);
    t.positive = required_string(obj, "positive", source, line_no);
    if (t.anchor.empty()) throw Error(at_line(source, line_no) + ": empty query");
    if (t.positive.empty()) throw Error(at_line(source, line_no) + ": empty positive");
    auto neg = obj.find("negative");
    if (neg != obj.end() && !neg->is_null()) {
      if (!neg->is_string()) throw Error(at_line(source, line_no) + ": field negative is not a string");
      t.negative = neg->get<std::string>();
      if (t.negative->empty()) throw Error(at_line(source, line_no) + ": empty negative");
    }
    out.push_back(std::move(t));
  });
  return out;
}

std::vector<ScoredPair> parse_sts_text(const std::string& content, const std::string& source) {
  std::vector<ScoredPair> out;
  for_each_line(content, [&](std::size_t line_no, std::string_view line) {
    json obj = parse_json_line(line, source, line_no);
    ScoredPair p;
    p.sentence_a = required_string(obj, "sentence1", source, line_no);
    p.sentence_b = required_string(obj, "sentence2", source, line_no);
    auto score = obj.find("score");
    if (score == obj.end() || !score->is_number()) throw Error(at_line(source, line_no) + ": missing field score");
    const double raw = score->get<double>();
    if (!std::isfinite(raw) || raw < 0.0 || raw > kStsScoreScale)
      throw Error(at_line(source, line_no) + ": score outside [0, 5]");
    p.gold_score = raw / kStsScoreScale;
    out.push_back(std::move(p));
  });
  return out;
}

Corpus parse_corpus(const std::filesystem::path& path) { return parse_corpus_text(read_file(path), path.string()); }
std::vector<Query> parse_queries(const std::filesystem::path& path) {
  return parse_queries_text(read_file(path), path.string());
}
Qrels parse_qrels(const std::filesystem::path& path) { return parse_qrels_text(read_file(path), path.string()); }
std::vector<Triplet> parse_triplets(const std::filesystem::path& path) {
  return parse_triplets_text(read_file(path), path.string());
}
std::vector<ScoredPair> parse_sts_pairs(const std::filesystem::path& path) {
  return parse_sts_text(read_file(path), path.string());
}

std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  for (const auto& d : corpus) {
    ordered_json j{{"_id", d.id}, {"title", d.title}, {"text", d.text}};
    out += j.dump() + "\n";
  }
  return out;
}

std::string serialize_queries(const std::vector<Query>& queries) {
  std::string out;
  for (const auto& q : queries) out += ordered_json{{"_id", q.id}, {"text", q.text}}.dump() + "\n";
  return out;
}

std::string serialize_qrels(const Qrels& qrels) {
  std::string out = "query-id\tcorpus-id\tscore\n";
  for (const auto& [qid, docs] : qrels)
    for (const auto& [did, grade] : docs) out += qid + "\t" + did + "\t" + std::to_string(grade) + "\n";
  return out;
}

std::string serialize_triplets(const std::vector<Triplet>& triplets) {
  std::string out;
  for (const auto& t : triplets) {
    ordered_json j{{"query", t.anchor}, {"positive", t.positive}};
    if (t.negative) j["negative"] = *t.negative;
    out += j.dump() + "\n";
  }
  return out;
}

std::string serialize_sts_pairs(const std::vector<ScoredPair>& pairs) {
  std::string out;
  for (const auto& p : pairs) {
    ordered_json j{{"sentence1", p.sentence_a}, {"sentence2", p.sentence_b}, {"score", p.gold_score * kStsScoreScale}};
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<std::string> queries_without_relevant(const Qrels& qrels) {
  std::vector<std::string> out;
  for (const auto& [qid, docs] : qrels)
    if (std::none_of(docs.begin(), docs.end(), [](const auto& kv) { return kv.second > 0; })) out.push_back(qid);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic data

namespace {

constexpr std::size_t kKeywordsPerTopic = 4;
constexpr std::size_t kDocKeywords = 3;    // of the topic's 4, so any two-keyword query overlaps
constexpr std::size_t kQueryKeywords = 2;
constexpr std::size_t kTitleFillers = 2;
constexpr std::size_t kDocFillers = 10;
constexpr std::size_t kQueryFillers = 3;
constexpr std::size_t kSentenceWords = 6;  // NLI / STS sentences
constexpr std::size_t kFillerVocabulary = 240;

const char* const kOnsets[] = {"b", "c", "ç", "d", "f", "g", "h", "k", "l", "m",
                               "n", "p", "r", "s", "ş", "t", "v", "y", "z"};
const char* const kVowels[] = {"a", "e", "ı", "i", "o", "ö", "u", "ü"};
const char* const kCodas[] = {"", "", "", "n", "r", "l", "k", "m", "t", "ş"};

std::string make_word(Rng& rng) {
  const std::size_t syllables = 2 + rng.below(2);
  std::string w;
  for (std::size_t s = 0; s < syllables; ++s) {
    w += kOnsets[rng.below(std::size(kOnsets))];
    w += kVowels[rng.below(std::size(kVowels))];
    w += kCodas[rng.below(std::size(kCodas))];
  }
  return w;
}

std::vector<std::string> unique_words(Rng& rng, std::size_t n, std::set<std::string>& taken) {
  std::vector<std::string> out;
  while (out.size() < n) {
    auto w = make_word(rng);
    if (taken.insert(w).second) out.push_back(std::move(w));
  }
  return out;
}

// k distinct elements of `pool`, in random order.
std::vector<std::string> sample(Rng& rng, const std::vector<std::string>& pool, std::size_t k) {
  std::vector<std::size_t> idx(pool.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(pool[idx[i]]);
  return out;
}

std::vector<std::string> draw(Rng& rng, const std::vector<std::string>& pool, std::size_t k) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(pool[rng.below(pool.size())]);
  return out;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::string mixed_sentence(Rng& rng, std::vector<std::string> keywords, const std::vector<std::string>& fillers,
                           std::size_t n_fillers) {
  auto words = draw(rng, fillers, n_fillers);
  words.insert(words.end(), keywords.begin(), keywords.end());
  rng.shuffle(words);
  return join(words);
}

}  // namespace

SynthDataset synth_retrieval_dataset(const SynthConfig& config) {
  if (config.n_topics < 1 || config.docs_per_topic < 1 || config.queries_per_topic < 1)
    throw Error("synth: all counts must be >= 1");

  Rng rng(config.seed);
  SynthDataset ds;
  std::set<std::string> taken;
  for (std::size_t t = 0; t < config.n_topics; ++t) ds.topic_keywords.push_back(unique_words(rng, kKeywordsPerTopic, taken));
  ds.filler_words = unique_words(rng, kFillerVocabulary, taken);
  const auto& fillers = ds.filler_words;

  std::vector<std::vector<std::size_t>> topic_docs(config.n_topics);
  for (std::size_t t = 0; t < config.n_topics; ++t) {
    for (std::size_t j = 0; j < config.docs_per_topic; ++j) {
      Document d;
      d.id = "d" + std::to_string(t) + "_" + std::to_string(j);
      d.title = join(draw(rng, fillers, kTitleFillers));
      d.text = mixed_sentence(rng, sample(rng, ds.topic_keywords[t], kDocKeywords), fillers, kDocFillers);
      topic_docs[t].push_back(ds.corpus.size());
      ds.corpus.add(std::move(d));
    }
  }

  for (std::size_t t = 0; t < config.n_topics; ++t) {
    for (std::size_t j = 0; j < config.queries_per_topic; ++j) {
      Query q;
      q.id = "q" + std::to_string(t) + "_" + std::to_string(j);
      q.text = mixed_sentence(rng, sample(rng, ds.topic_keywords[t], kQueryKeywords), fillers, kQueryFillers);
      for (std::size_t di : topic_docs[t]) ds.qrels[q.id][ds.corpus[di].id] = 1;
      ds.queries.push_back(std::move(q));
    }
  }

  // Training triplets come from fresh queries so evaluation queries stay unseen.
  auto doc_text = [&](std::size_t di) { return ds.corpus[di].title + " " + ds.corpus[di].text; };
  for (std::size_t t = 0; t < config.n_topics; ++t) {
    for (std::size_t di : topic_docs[t]) {
      Triplet tr;
      tr.anchor = mixed_sentence(rng, sample(rng, ds.topic_keywords[t], kQueryKeywords), fillers, kQueryFillers);
      tr.positive = doc_text(di);
      if (config.n_topics > 1) {
        std::size_t other = rng.below(config.n_topics - 1);
        if (other >= t) ++other;
        tr.negative = doc_text(topic_docs[other][rng.below(topic_docs[other].size())]);
      }
      ds.triplets.push_back(std::move(tr));
    }
  }

  const std::size_t n_general = config.n_topics * config.docs_per_topic;
  for (std::size_t i = 0; i < n_general; ++i) {
    auto anchor = sample(rng, fillers, kSentenceWords);
    auto entail = anchor;
    entail[rng.below(entail.size())] = fillers[rng.below(fillers.size())];
    rng.shuffle(entail);
    Triplet tr{join(anchor), join(entail), join(sample(rng, fillers, kSentenceWords))};
    ds.nli_triplets.push_back(std::move(tr));
  }

  for (std::size_t i = 0; i < n_general; ++i) {
    auto a = sample(rng, fillers, kSentenceWords);
    const std::size_t kept = rng.below(kSentenceWords + 1);
    std::vector<std::string> b(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(kept));
    auto fresh = draw(rng, fillers, kSentenceWords - kept);
    b.insert(b.end(), fresh.begin(), fresh.end());
    rng.shuffle(b);
    const double raw = kStsScoreScale * static_cast<double>(kept) / static_cast<double>(kSentenceWords);
    ds.sts_pairs.push_back({join(a), join(b), raw / kStsScoreScale});
  }
  return ds;
}

}  // namespace embkit
