#include "embkit/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "embkit/kernels.hpp"

namespace embkit {

using nlohmann::json;
using nlohmann::ordered_json;

RunResult make_run(std::vector<RankedList> lists) {
  RunResult run;
  for (auto& l : lists) {
    std::string id = l.query_id;
    if (!run.emplace(id, std::move(l)).second) throw Error("run: duplicate query id " + id);
  }
  return run;
}

double MetricReport::at(const std::string& metric, std::size_t cutoff) const {
  auto m = values.find(metric);
  if (m == values.end()) throw Error("metric report has no metric " + metric);
  auto c = m->second.find(cutoff);
  if (c == m->second.end()) throw Error("metric report has no cutoff " + std::to_string(cutoff) + " for " + metric);
  return c->second;
}

MetricReport ir_metrics(const RunResult& run, const Qrels& qrels, const std::vector<std::size_t>& cutoffs) {
  if (cutoffs.empty()) throw Error("ir_metrics: no cutoffs");
  for (auto k : cutoffs)
    if (k < 1) throw Error("ir_metrics: cutoff must be >= 1");
  if (run.empty()) throw Error("ir_metrics: empty run");

  MetricReport report;
  report.cutoffs = cutoffs;
  std::sort(report.cutoffs.begin(), report.cutoffs.end());
  report.cutoffs.erase(std::unique(report.cutoffs.begin(), report.cutoffs.end()), report.cutoffs.end());
  for (const char* name : kMetricNames)
    for (auto k : report.cutoffs) report.values[name][k] = 0.0;

  for (const auto& [qid, list] : run) {
    auto judged = qrels.find(qid);
    if (judged == qrels.end()) {
      ++report.skipped_queries;
      continue;
    }
    std::vector<int> ideal;
    for (const auto& [doc, grade] : judged->second)
      if (grade > 0) ideal.push_back(grade);
    if (ideal.empty()) {
      ++report.skipped_queries;
      continue;
    }
    ++report.evaluated_queries;
    std::sort(ideal.rbegin(), ideal.rend());
    const double n_rel = static_cast<double>(ideal.size());

    auto grade_of = [&](const std::string& doc) {
      auto it = judged->second.find(doc);
      return it == judged->second.end() ? 0 : it->second;
    };

    for (auto k : report.cutoffs) {
      const std::size_t depth = std::min(k, list.items.size());
      std::size_t hits = 0;
      double reciprocal = 0.0, dcg = 0.0, precision_sum = 0.0;
      for (std::size_t r = 0; r < depth; ++r) {
        const int g = grade_of(list.items[r].doc_id);
        if (g <= 0) continue;
        ++hits;
        const double rank = static_cast<double>(r + 1);
        if (reciprocal == 0.0) reciprocal = 1.0 / rank;
        dcg += g / std::log2(rank + 1.0);
        precision_sum += static_cast<double>(hits) / rank;
      }
      double idcg = 0.0;
      for (std::size_t r = 0; r < std::min(k, ideal.size()); ++r) idcg += ideal[r] / std::log2(static_cast<double>(r) + 2.0);

      auto& v = report.values;
      v["accuracy"][k] += hits > 0 ? 1.0 : 0.0;
      v["precision"][k] += static_cast<double>(hits) / static_cast<double>(k);
      v["recall"][k] += static_cast<double>(hits) / n_rel;
      v["mrr"][k] += reciprocal;
      v["ndcg"][k] += dcg / idcg;
      v["map"][k] += precision_sum / std::min(n_rel, static_cast<double>(k));
    }
  }
  if (report.evaluated_queries > 0) {
    const double n = static_cast<double>(report.evaluated_queries);
    for (auto& [name, by_cutoff] : report.values)
      for (auto& [k, v] : by_cutoff) v /= n;
  }
  return report;
}

ordered_json to_json(const MetricReport& report) {
  ordered_json j;
  for (const char* name : kMetricNames) {
    ordered_json by_cutoff = ordered_json::object();
    for (auto k : report.cutoffs) by_cutoff[std::to_string(k)] = report.at(name, k);
    j[name] = by_cutoff;
  }
  j["evaluated_queries"] = report.evaluated_queries;
  j["skipped_queries"] = report.skipped_queries;
  return j;
}

MetricReport metric_report_from_json(const json& j) {
  MetricReport report;
  try {
    for (const char* name : kMetricNames) {
      if (!j.contains(name)) throw Error(std::string("metric report JSON lacks ") + name);
      std::vector<std::size_t> cutoffs;
      for (const auto& [key, value] : j.at(name).items()) {
        const std::size_t k = std::stoul(key);
        cutoffs.push_back(k);
        report.values[name][k] = value.get<double>();
      }
      std::sort(cutoffs.begin(), cutoffs.end());
      if (report.cutoffs.empty()) report.cutoffs = cutoffs;
      else if (report.cutoffs != cutoffs) throw Error("metric report JSON has inconsistent cutoffs across metrics");
    }
    report.evaluated_queries = j.at("evaluated_queries").get<std::size_t>();
    report.skipped_queries = j.at("skipped_queries").get<std::size_t>();
  } catch (const json::exception& e) {
    throw Error(std::string("malformed metric report JSON: ") + e.what());
  } catch (const std::logic_error& e) {
    throw Error(std::string("malformed metric report JSON: ") + e.what());
  }
  return report;
}

// ---------------------------------------------------------------------------
// Correlations

namespace {

double variance_sum(std::span<const double> x, double mean) {
  double s = 0.0;
  for (double v : x) s += (v - mean) * (v - mean);
  return s;
}

double mean_of(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double pearson_named(std::span<const double> x, std::span<const double> y, const std::string& x_name,
                     const std::string& y_name) {
  if (x.size() != y.size()) throw Error("correlation: series differ in length");
  if (x.size() < 2) throw Error("correlation: need at least 2 points");
  const double mx = mean_of(x), my = mean_of(y);
  const double sxx = variance_sum(x, mx), syy = variance_sum(y, my);
  if (sxx == 0.0) throw Error("correlation: zero variance in series " + x_name);
  if (syy == 0.0) throw Error("correlation: zero variance in series " + y_name);
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sxy += (x[i] - mx) * (y[i] - my);
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) { return pearson_named(x, y, "x", "y"); }

double spearman(std::span<const double> x, std::span<const double> y) {
  const auto rx = average_ranks(x), ry = average_ranks(y);
  return pearson_named(rx, ry, "x", "y");
}

StsReport sts_correlations(const std::vector<std::vector<double>>& scores_by_measure, std::span<const double> gold) {
  if (scores_by_measure.size() != std::size(kAllMeasures)) throw Error("sts: expected one score series per measure");
  StsReport report;
  report.pairs = gold.size();
  const auto gold_ranks = average_ranks(gold);
  for (std::size_t m = 0; m < std::size(kAllMeasures); ++m) {
    const std::string name(measure_name(kAllMeasures[m]));
    const auto& s = scores_by_measure[m];
    Correlation c;
    c.pearson = pearson_named(s, gold, name, "gold");
    c.spearman = pearson_named(average_ranks(s), gold_ranks, name, "gold");
    report.by_measure[kAllMeasures[m]] = c;
  }
  return report;
}

StsReport sts_eval(const EncoderParams& params, const std::vector<ScoredPair>& pairs) {
  if (pairs.size() < 3) throw Error("sts_eval: need at least 3 pairs");
  std::vector<std::string> texts;
  texts.reserve(2 * pairs.size());
  for (const auto& p : pairs) texts.push_back(p.sentence_a);
  for (const auto& p : pairs) texts.push_back(p.sentence_b);
  const Matrix emb = kernels::omp::embed_batch(params, texts);

  const std::size_t n = pairs.size();
  std::vector<std::vector<double>> scores(std::size(kAllMeasures), std::vector<double>(n));
  std::vector<double> gold(n);
  for (std::size_t i = 0; i < n; ++i) {
    gold[i] = pairs[i].gold_score;
    for (std::size_t m = 0; m < std::size(kAllMeasures); ++m)
      scores[m][i] = similarity(emb.row(i), emb.row(n + i), kAllMeasures[m]);
  }
  return sts_correlations(scores, gold);
}

ordered_json to_json(const StsReport& report) {
  ordered_json j;
  for (Measure m : kAllMeasures) {
    const auto& c = report.by_measure.at(m);
    j[std::string(measure_name(m))] = ordered_json{{"pearson", c.pearson}, {"spearman", c.spearman}};
  }
  j["pairs"] = report.pairs;
  return j;
}

StsReport sts_report_from_json(const json& j) {
  StsReport report;
  try {
    for (Measure m : kAllMeasures) {
      const auto& c = j.at(std::string(measure_name(m)));
      report.by_measure[m] = {c.at("pearson").get<double>(), c.at("spearman").get<double>()};
    }
    report.pairs = j.at("pairs").get<std::size_t>();
  } catch (const json::exception& e) {
    throw Error(std::string("malformed STS report JSON: ") + e.what());
  }
  return report;
}

// ---------------------------------------------------------------------------
// Comparisons

double relative_improvement(double after, double before) {
  if (!(before > 0.0)) throw Error("relative_improvement: baseline must be positive");
  return 100.0 * (after - before) / before;
}

std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string format_pct(double pct) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%+.2f%%", pct);
  // -0.00 and +0.00 both read as no change
  if (std::string(buf) == "-0.00%") return "+0.00%";
  return buf;
}

namespace {

const char* const kArrow = "→";

std::string pad_right(const std::string& s, std::size_t width) {
  // Width counts code points so the arrow aligns like one column.
  std::size_t cps = 0;
  for (unsigned char c : s)
    if ((c & 0xC0) != 0x80) ++cps;
  return cps >= width ? s : s + std::string(width - cps, ' ');
}

}  // namespace

Comparison compare_reports(const MetricReport& before, const MetricReport& after) {
  if (before.cutoffs != after.cutoffs) throw Error("compare_reports: reports were computed at different cutoffs");
  Comparison cmp;
  for (const char* name : kMetricNames) {
    for (auto k : before.cutoffs) {
      ComparisonRow row{name, k, before.at(name, k), after.at(name, k), std::nullopt};
      if (row.before > 0.0) row.improvement_pct = relative_improvement(row.after, row.before);
      cmp.rows.push_back(row);
    }
  }
  return cmp;
}

std::string Comparison::render_text() const {
  std::ostringstream out;
  out << pad_right("metric", 16) << pad_right("before " + std::string(kArrow) + " after", 20) << "improvement\n";
  for (const auto& r : rows) {
    const std::string label = r.metric + "@" + std::to_string(r.cutoff);
    const std::string cell = format_fixed(r.before, 4) + " " + kArrow + " " + format_fixed(r.after, 4);
    out << pad_right(label, 16) << pad_right(cell, 20) << (r.improvement_pct ? format_pct(*r.improvement_pct) : "n/a")
        << "\n";
  }
  return out.str();
}

ordered_json Comparison::to_json() const {
  ordered_json rows_json = ordered_json::array();
  for (const auto& r : rows) {
    ordered_json j{{"metric", r.metric}, {"cutoff", r.cutoff}, {"before", r.before}, {"after", r.after}};
    j["improvement_pct"] = r.improvement_pct ? ordered_json(*r.improvement_pct) : ordered_json(nullptr);
    rows_json.push_back(j);
  }
  return ordered_json{{"rows", rows_json}};
}

std::string render_sts_comparison(const StsReport& before, const StsReport& after) {
  std::ostringstream out;
  out << pad_right("measure", 12) << pad_right("pearson (r)", 20) << pad_right("spearman (rho)", 20) << "change\n";
  for (Measure m : kAllMeasures) {
    const auto& b = before.by_measure.at(m);
    const auto& a = after.by_measure.at(m);
    auto cell = [](double x, double y) { return format_fixed(x, 4) + " " + kArrow + " " + format_fixed(y, 4); };
    auto direction = [](double x, double y) { return y > x ? "up" : (y < x ? "down" : "unchanged"); };
    out << pad_right(std::string(measure_name(m)), 12) << pad_right(cell(b.pearson, a.pearson), 20)
        << pad_right(cell(b.spearman, a.spearman), 20) << "r " << direction(b.pearson, a.pearson) << ", rho "
        << direction(b.spearman, a.spearman) << "\n";
  }
  return out.str();
}

ordered_json sts_comparison_json(const StsReport& before, const StsReport& after) {
  ordered_json j;
  for (Measure m : kAllMeasures) {
    const auto& b = before.by_measure.at(m);
    const auto& a = after.by_measure.at(m);
    j[std::string(measure_name(m))] = ordered_json{
        {"pearson", {{"before", b.pearson}, {"after", a.pearson}}},
        {"spearman", {{"before", b.spearman}, {"after", a.spearman}}},
    };
  }
  return j;
}

std::optional<double> BaselineTable::improvement(const BaselineRow& row) const {
  if (!row.baseline) return std::nullopt;
  return relative_improvement(row.ours, *row.baseline);
}

bool BaselineTable::disagrees(const BaselineRow& row) const {
  const auto computed = improvement(row);
  return computed && row.published_pct && std::abs(*computed - *row.published_pct) > tolerance_pp;
}

std::string BaselineTable::render_text() const {
  std::ostringstream out;
  out << pad_right("metric", 16) << pad_right("model", 10) << pad_right("baseline", 10) << "relative improvement\n";
  std::vector<std::string> notes;
  for (const auto& r : rows) {
    const auto imp = improvement(r);
    std::string imp_cell = imp ? format_pct(*imp) : "n/a";
    if (disagrees(r)) {
      notes.push_back(r.label + ": published " + format_pct(*r.published_pct) + ", recomputed " + format_pct(*imp));
      imp_cell += " *";
    }
    out << pad_right(r.label, 16) << pad_right(format_fixed(r.ours, 4), 10)
        << pad_right(r.baseline ? format_fixed(*r.baseline, 4) : "n/a", 10) << imp_cell << "\n";
  }
  if (!notes.empty()) {
    out << "\n* published improvement differs from 100*(model - baseline)/baseline; the recomputed value is shown.\n";
    for (const auto& n : notes) out << "  " << n << "\n";
  }
  return out.str();
}

}  // namespace embkit
