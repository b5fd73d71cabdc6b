#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "embkit/corpus.hpp"
#include "embkit/encoder.hpp"
#include "embkit/retrieval.hpp"
#include "json.hpp"

namespace embkit {

/// query id -> ranked list.
using RunResult = std::map<std::string, RankedList>;

RunResult make_run(std::vector<RankedList> lists);

inline const std::vector<std::size_t> kDefaultCutoffs{1, 3, 5, 10, 100};
inline const char* const kMetricNames[] = {"accuracy", "precision", "recall", "mrr", "ndcg", "map"};

/// Every metric at every cutoff; means over evaluated queries only.
struct MetricReport {
  std::vector<std::size_t> cutoffs;
  std::map<std::string, std::map<std::size_t, double>> values;
  std::size_t evaluated_queries = 0;
  std::size_t skipped_queries = 0;

  double at(const std::string& metric, std::size_t cutoff) const;
  bool operator==(const MetricReport&) const = default;
};

/// Relevant means grade > 0. accuracy@k is the hit rate (>= 1 relevant in the
/// top k); ndcg uses gain = grade with 1/log2(rank + 1) discount; map@k
/// divides by min(R, k). Run queries absent from qrels or without a relevant
/// document are skipped and counted.
MetricReport ir_metrics(const RunResult& run, const Qrels& qrels,
                        const std::vector<std::size_t>& cutoffs = kDefaultCutoffs);

nlohmann::ordered_json to_json(const MetricReport& report);
MetricReport metric_report_from_json(const nlohmann::json& j);

double pearson(std::span<const double> x, std::span<const double> y);
/// Pearson over average-tie ranks.
double spearman(std::span<const double> x, std::span<const double> y);
std::vector<double> average_ranks(std::span<const double> x);

struct Correlation {
  double pearson = 0.0;
  double spearman = 0.0;
  bool operator==(const Correlation&) const = default;
};

struct StsReport {
  std::map<Measure, Correlation> by_measure;
  std::size_t pairs = 0;
  bool operator==(const StsReport&) const = default;
};

/// Correlations of per-pair similarity scores with the gold scores.
StsReport sts_correlations(const std::vector<std::vector<double>>& scores_by_measure, std::span<const double> gold);
StsReport sts_eval(const EncoderParams& params, const std::vector<ScoredPair>& pairs);

nlohmann::ordered_json to_json(const StsReport& report);
StsReport sts_report_from_json(const nlohmann::json& j);

/// 100 * (after - before) / before.
double relative_improvement(double after, double before);

struct ComparisonRow {
  std::string metric;
  std::size_t cutoff = 0;
  double before = 0.0;
  double after = 0.0;
  std::optional<double> improvement_pct;  // empty when before == 0
};

struct Comparison {
  std::vector<ComparisonRow> rows;
  std::string render_text() const;
  nlohmann::ordered_json to_json() const;
};

Comparison compare_reports(const MetricReport& before, const MetricReport& after);

/// Before/after table for STS reports, one row per measure.
std::string render_sts_comparison(const StsReport& before, const StsReport& after);
nlohmann::ordered_json sts_comparison_json(const StsReport& before, const StsReport& after);

/// Model-vs-baseline table with a relative-improvement column. When a row
/// also carries a previously published improvement that disagrees with the
/// recomputed one by more than `tolerance_pp`, the row is flagged and a
/// footnote lists both numbers.
struct BaselineRow {
  std::string label;
  double ours = 0.0;
  std::optional<double> baseline;
  std::optional<double> published_pct;
};

struct BaselineTable {
  std::vector<BaselineRow> rows;
  double tolerance_pp = 0.05;

  std::optional<double> improvement(const BaselineRow& row) const;
  bool disagrees(const BaselineRow& row) const;
  std::string render_text() const;
};

std::string format_fixed(double v, int decimals);
std::string format_pct(double pct);

}  // namespace embkit
