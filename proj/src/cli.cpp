#include "embkit/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "embkit/corpus.hpp"
#include "embkit/encoder.hpp"
#include "embkit/evalkit.hpp"
#include "embkit/kernels.hpp"
#include "embkit/retrieval.hpp"
#include "embkit/trainer.hpp"

namespace embkit::cli {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

ordered_json synth_plan(const PlanDefaults& d) {
  const ordered_json matryoshka{{"dims", {d.dim, d.dim / 2, d.dim / 4, d.dim / 8}}, {"weights", {1.0, 1.0, 1.0, 1.0}}};
  return ordered_json{
      {"seed", d.seed},
      {"encoder", {{"buckets", d.buckets}, {"hidden", d.hidden}, {"dim", d.dim}}},
      {"evaluation",
       {{"retrieval",
         {{"corpus", "corpus.jsonl"},
          {"queries", "queries.jsonl"},
          {"qrels", "qrels.tsv"},
          {"cutoffs", {1, 3, 5, 10, 100}},
          {"measure", "cosine"}}},
        {"sts", {{"pairs", "sts.jsonl"}}}}},
      {"stages",
       {{{"name", "nli"},
         {"dataset", "nli.jsonl"},
         {"loss", "mnrl"},
         {"batch_size", 32},
         {"epochs", 1},
         {"learning_rate", 2e-3},
         {"weight_decay", 0.01},
         {"scale", 20.0}},
        {{"name", "sts"},
         {"dataset", "sts.jsonl"},
         {"loss", "cosent"},
         {"batch_size", 32},
         {"epochs", 1},
         {"learning_rate", 2e-3},
         {"weight_decay", 0.01},
         {"scale", 20.0}},
        {{"name", "retrieval"},
         {"dataset", "triplets.jsonl"},
         {"loss", "cached_mnrl"},
         {"matryoshka", matryoshka},
         {"batch_size", 64},
         {"chunk_size", 16},
         {"epochs", 3},
         {"learning_rate", 2e-3},
         {"weight_decay", 0.01},
         {"scale", 20.0}}}}};
}

namespace {

enum class Format { text, json };

struct Common {
  std::string format = "text";
  std::string out_path;

  Format fmt() const { return format == "json" ? Format::json : Format::text; }
};

void require_file(const std::string& path) {
  if (!fs::exists(path)) throw Error("missing file: " + path);
}

void emit(const Common& c, std::ostream& out, const std::string& content) {
  if (c.out_path.empty()) out << content;
  else write_file(c.out_path, content);
}

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

std::string metric_report_text(const MetricReport& r) {
  std::string s = "metric      ";
  for (auto k : r.cutoffs) {
    std::string h = "@" + std::to_string(k);
    s += h + std::string(h.size() < 10 ? 10 - h.size() : 1, ' ');
  }
  s += "\n";
  for (const char* name : kMetricNames) {
    std::string row = name;
    row.resize(12, ' ');
    for (auto k : r.cutoffs) row += format_fixed(r.at(name, k), 4) + "    ";
    s += row + "\n";
  }
  s += "evaluated queries: " + std::to_string(r.evaluated_queries) + ", skipped: " + std::to_string(r.skipped_queries) +
       "\n";
  return s;
}

std::string sts_report_text(const StsReport& r) {
  std::string s = "measure     pearson   spearman\n";
  for (Measure m : kAllMeasures) {
    std::string row(measure_name(m));
    row.resize(12, ' ');
    const auto& c = r.by_measure.at(m);
    s += row + format_fixed(c.pearson, 4) + "    " + format_fixed(c.spearman, 4) + "\n";
  }
  s += "pairs: " + std::to_string(r.pairs) + "\n";
  return s;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--format", c.format, "Output format")->check(CLI::IsMember({"text", "json"}));
  sub->add_option("--out", c.out_path, "Write output to this file instead of stdout");
}

json parse_json_file(const std::string& path) {
  json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw Error(path + ": malformed JSON");
  return j;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Contrastive embedding training, exact dense retrieval and evaluation", "embkit"};
  app.require_subcommand(1);
  app.fallthrough();
  int threads = 0;
  app.add_option("--threads", threads, "Cap on worker threads (results do not depend on it)")
      ->check(CLI::PositiveNumber);

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset and a 3-stage plan");
  SynthConfig sc;
  PlanDefaults pd;
  std::string synth_out;
  synth->add_option("--seed", sc.seed, "Random seed")->capture_default_str();
  synth->add_option("--topics", sc.n_topics, "Number of topics")->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--docs-per-topic", sc.docs_per_topic, "Documents per topic")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  synth->add_option("--queries-per-topic", sc.queries_per_topic, "Evaluation queries per topic")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  synth->add_option("--buckets", pd.buckets, "Encoder hash buckets written into plan.json")->capture_default_str();
  synth->add_option("--hidden", pd.hidden, "Encoder hidden size written into plan.json")->capture_default_str();
  synth->add_option("--dim", pd.dim, "Encoder output dim written into plan.json")->capture_default_str();
  synth->add_option("--out", synth_out, "Output directory")->required();

  // init
  auto* init = app.add_subcommand("init", "Write a freshly initialized (untrained) checkpoint");
  std::uint64_t init_seed = 42;
  std::uint32_t init_buckets = 65536, init_hidden = 256, init_dim = 64;
  std::string init_out;
  init->add_option("--seed", init_seed, "Random seed")->capture_default_str();
  init->add_option("--buckets", init_buckets, "Hash buckets V")->capture_default_str();
  init->add_option("--hidden", init_hidden, "Hidden size H")->capture_default_str();
  init->add_option("--dim", init_dim, "Embedding dim d")->capture_default_str();
  init->add_option("--out", init_out, "Checkpoint path")->required();

  // train
  auto* train = app.add_subcommand("train", "Run a stage plan");
  std::string plan_path, train_out, train_ckpt, resume_after;
  Common train_c;
  train->add_option("--plan", plan_path, "Stage plan JSON")->required();
  train->add_option("--out", train_out, "Directory for checkpoints and reports")->required();
  train->add_option("--checkpoint", train_ckpt, "Initial checkpoint (default: initialize from the plan seed)");
  train->add_option("--resume-after", resume_after, "Continue after this completed stage (name)");
  train->add_option("--format", train_c.format, "Output format")->check(CLI::IsMember({"text", "json"}));

  // index
  auto* index = app.add_subcommand("index", "Embed a corpus into an exact-search index");
  std::string index_ckpt, index_corpus, index_out;
  std::uint32_t index_dim = 0;
  index->add_option("--checkpoint", index_ckpt, "Encoder checkpoint")->required();
  index->add_option("--corpus", index_corpus, "Corpus JSONL")->required();
  index->add_option("--out", index_out, "Index path")->required();
  index->add_option("--dim", index_dim, "Keep only this many leading dimensions")->check(CLI::PositiveNumber);

  // search
  auto* search = app.add_subcommand("search", "Top-k search for each query");
  std::string search_index, search_ckpt, search_queries_path, search_measure = "cosine";
  std::size_t search_k = 10;
  Common search_c;
  search->add_option("--index", search_index, "Index file")->required();
  search->add_option("--checkpoint", search_ckpt, "Encoder checkpoint for the queries")->required();
  search->add_option("--query-file", search_queries_path, "Queries JSONL (_id, text)")->required();
  search->add_option("--k", search_k, "Results per query")->check(CLI::PositiveNumber)->capture_default_str();
  search->add_option("--measure", search_measure, "Similarity measure")
      ->check(CLI::IsMember({"cosine", "dot", "euclidean", "manhattan"}))
      ->capture_default_str();
  add_common(search, search_c);

  // eval-retrieval
  auto* evr = app.add_subcommand("eval-retrieval", "IR metrics of an index against qrels");
  std::string evr_index, evr_ckpt, evr_queries, evr_qrels, evr_measure = "cosine";
  std::vector<std::size_t> evr_cutoffs = kDefaultCutoffs;
  Common evr_c;
  evr->add_option("--index", evr_index, "Index file")->required();
  evr->add_option("--checkpoint", evr_ckpt, "Encoder checkpoint for the queries")->required();
  evr->add_option("--queries", evr_queries, "Queries JSONL")->required();
  evr->add_option("--qrels", evr_qrels, "Qrels TSV")->required();
  evr->add_option("--cutoffs", evr_cutoffs, "Metric cutoffs")
      ->delimiter(',')
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  evr->add_option("--measure", evr_measure, "Similarity measure")
      ->check(CLI::IsMember({"cosine", "dot", "euclidean", "manhattan"}))
      ->capture_default_str();
  add_common(evr, evr_c);

  // eval-sts
  auto* evs = app.add_subcommand("eval-sts", "Pearson/Spearman of four similarity measures against STS gold");
  std::string evs_ckpt, evs_pairs;
  Common evs_c;
  evs->add_option("--checkpoint", evs_ckpt, "Encoder checkpoint")->required();
  evs->add_option("--pairs", evs_pairs, "STS JSONL (sentence1, sentence2, score)")->required();
  add_common(evs, evs_c);

  // report
  auto* report = app.add_subcommand("report", "Before/after comparison of two reports");
  std::string before_path, after_path;
  Common report_c;
  report->add_option("--before", before_path, "Report JSON before")->required();
  report->add_option("--after", after_path, "Report JSON after")->required();
  add_common(report, report_c);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    err << "run with --help for usage\n";
    return kExitUsage;
  }

  try {
    kernels::set_threads(threads);

    if (*synth) {
      const SynthDataset ds = synth_retrieval_dataset(sc);
      pd.seed = sc.seed;
      const fs::path dir(synth_out);
      write_file(dir / "corpus.jsonl", serialize_corpus(ds.corpus));
      write_file(dir / "queries.jsonl", serialize_queries(ds.queries));
      write_file(dir / "qrels.tsv", serialize_qrels(ds.qrels));
      write_file(dir / "triplets.jsonl", serialize_triplets(ds.triplets));
      write_file(dir / "nli.jsonl", serialize_triplets(ds.nli_triplets));
      write_file(dir / "sts.jsonl", serialize_sts_pairs(ds.sts_pairs));
      write_file(dir / "plan.json", dump(synth_plan(pd)));
      err << "synth: " << ds.corpus.size() << " documents, " << ds.queries.size() << " queries, "
          << ds.triplets.size() << " triplets -> " << dir.string() << "\n";
      return kExitOk;
    }

    if (*init) {
      save_params_file(init_params(init_seed, init_buckets, init_hidden, init_dim), init_out);
      err << "init: wrote " << init_out << "\n";
      return kExitOk;
    }

    if (*train) {
      require_file(plan_path);
      if (!train_ckpt.empty()) require_file(train_ckpt);
      const StagePlan plan = load_plan(plan_path);
      const EncoderParams initial = train_ckpt.empty() ? init_params(plan.seed, plan.buckets, plan.hidden, plan.dim)
                                                       : load_params_file(train_ckpt);
      PipelineOptions opts;
      opts.output_dir = fs::path(train_out);
      if (!resume_after.empty()) {
        auto it = std::find_if(plan.stages.begin(), plan.stages.end(),
                               [&](const StageConfig& s) { return s.name == resume_after; });
        if (it == plan.stages.end()) throw Error("no stage named " + resume_after);
        opts.resume_after = static_cast<std::size_t>(it - plan.stages.begin());
      }
      fs::create_directories(train_out);
      save_params_file(round_to_float32(initial), fs::path(train_out) / "initial.te4e");
      const PipelineResult result = run_pipeline(initial, plan, opts);
      const auto report_json = pipeline_report_json(result);
      write_file(fs::path(train_out) / "pipeline_report.json", dump(report_json));
      for (const auto& s : result.stages)
        err << "train: stage " << s.report.name << " -> " << s.checkpoint.string() << "\n";
      if (train_c.fmt() == Format::json) {
        out << dump(report_json);
      } else {
        for (const auto& s : result.stages) {
          out << "stage " << s.report.name << ": steps " << s.report.steps << ", epoch losses";
          for (double l : s.report.epoch_losses) out << " " << format_fixed(l, 6);
          out << "\n";
          if (s.evaluation.retrieval) out << metric_report_text(*s.evaluation.retrieval);
          if (s.evaluation.sts) out << sts_report_text(*s.evaluation.sts);
        }
      }
      return kExitOk;
    }

    if (*index) {
      require_file(index_ckpt);
      require_file(index_corpus);
      const EncoderParams params = load_params_file(index_ckpt);
      EmbeddingIndex idx = build_index(params, parse_corpus(index_corpus));
      if (index_dim != 0) idx = truncate_renorm(idx, index_dim);
      save_index_file(idx, index_out);
      err << "index: " << idx.size() << " rows, dim " << idx.dim << " -> " << index_out << "\n";
      return kExitOk;
    }

    if (*search) {
      require_file(search_index);
      require_file(search_ckpt);
      require_file(search_queries_path);
      const EncoderParams params = load_params_file(search_ckpt);
      const EmbeddingIndex idx = load_index_file(search_index);
      const auto lists =
          search_queries(params, idx, parse_queries(search_queries_path), search_k, parse_measure(search_measure));
      if (search_c.fmt() == Format::json) {
        ordered_json arr = ordered_json::array();
        for (const auto& l : lists) {
          ordered_json items = ordered_json::array();
          for (const auto& it : l.items) items.push_back({{"doc_id", it.doc_id}, {"score", it.score}});
          arr.push_back({{"query_id", l.query_id}, {"results", items}});
        }
        emit(search_c, out, dump(arr));
      } else {
        std::string text;
        char buf[64];
        for (const auto& l : lists)
          for (std::size_t r = 0; r < l.items.size(); ++r) {
            std::snprintf(buf, sizeof buf, "%.6f", l.items[r].score);
            text += l.query_id + " Q0 " + l.items[r].doc_id + " " + std::to_string(r + 1) + " " + buf + " embkit\n";
          }
        emit(search_c, out, text);
      }
      return kExitOk;
    }

    if (*evr) {
      for (const auto& p : {evr_index, evr_ckpt, evr_queries, evr_qrels}) require_file(p);
      const EncoderParams params = load_params_file(evr_ckpt);
      const EmbeddingIndex idx = load_index_file(evr_index);
      const std::size_t depth = *std::max_element(evr_cutoffs.begin(), evr_cutoffs.end());
      const auto lists = search_queries(params, idx, parse_queries(evr_queries), depth, parse_measure(evr_measure));
      const MetricReport r = ir_metrics(make_run(lists), parse_qrels(evr_qrels), evr_cutoffs);
      emit(evr_c, out, evr_c.fmt() == Format::json ? dump(to_json(r)) : metric_report_text(r));
      return kExitOk;
    }

    if (*evs) {
      require_file(evs_ckpt);
      require_file(evs_pairs);
      const StsReport r = sts_eval(load_params_file(evs_ckpt), parse_sts_pairs(evs_pairs));
      emit(evs_c, out, evs_c.fmt() == Format::json ? dump(to_json(r)) : sts_report_text(r));
      return kExitOk;
    }

    if (*report) {
      require_file(before_path);
      require_file(after_path);
      const json b = parse_json_file(before_path);
      const json a = parse_json_file(after_path);
      const bool sts = b.contains("cosine") && a.contains("cosine");
      if (sts) {
        const auto rb = sts_report_from_json(b), ra = sts_report_from_json(a);
        emit(report_c, out,
             report_c.fmt() == Format::json ? dump(sts_comparison_json(rb, ra)) : render_sts_comparison(rb, ra));
      } else {
        const Comparison cmp = compare_reports(metric_report_from_json(b), metric_report_from_json(a));
        emit(report_c, out, report_c.fmt() == Format::json ? dump(cmp.to_json()) : cmp.render_text());
      }
      return kExitOk;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace embkit::cli
