// Acceptance checks. Prints one PASS/FAIL line per criterion followed by
// indented detail lines, and exits nonzero if anything failed.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>

#include "embkit/cli.hpp"
#include "embkit/evalkit.hpp"
#include "embkit/losses.hpp"
#include "embkit/retrieval.hpp"
#include "embkit/rng.hpp"
#include "gradcheck.hpp"
#include "json.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace embkit;
using testing_support::check_gradient;
using testing_support::GradCheck;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> details;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      details.push_back("failed: " + what);
    }
  }
  void note(const std::string& s) { details.push_back(s); }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

// ---------------------------------------------------------------------------
// Gradients

Matrix random_rows(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double n = 0;
    for (auto& x : m.row(r)) {
      x = rng.uniform(-1, 1);
      n += x * x;
    }
    for (auto& x : m.row(r)) x /= std::sqrt(n);
  }
  return m;
}

std::vector<Triplet> toy_triplets(std::size_t B, bool negatives, std::uint64_t seed) {
  static const char* words[] = {"kitap", "kalem", "defter", "masa", "sandalye", "pencere", "kapı", "duvar",
                                "tavan", "halı",  "lamba",  "perde"};
  Rng rng(seed);
  auto sentence = [&](std::size_t n) {
    std::string s;
    for (std::size_t i = 0; i < n; ++i) s += std::string(words[rng.below(12)]) + (i + 1 < n ? " " : "");
    return s;
  };
  std::vector<Triplet> t;
  for (std::size_t i = 0; i < B; ++i) {
    Triplet x{sentence(3) + " " + std::to_string(i), sentence(4), std::nullopt};
    if (negatives) x.negative = sentence(5);
    t.push_back(x);
  }
  return t;
}

EncoderParams small_params(std::uint64_t seed) {
  EncoderParams p = init_params(seed, 128, 16, 16);
  Rng rng(seed + 77);
  for (auto& x : p.b1) x = rng.uniform(-0.3, 0.3);
  for (auto& x : p.b2) x = rng.uniform(-0.3, 0.3);
  return p;
}

struct GradTally {
  std::size_t checked = 0, failed = 0, richardson_failed = 0;
  double worst = 0;
  std::string first_failure;

  void add(const GradCheck& literal, const GradCheck& rich, const std::string& label) {
    checked += literal.checked;
    failed += literal.failed;
    richardson_failed += rich.failed;
    worst = std::max(worst, literal.worst);
    if (first_failure.empty() && literal.failed) first_failure = label + " " + literal.first_failure;
  }
};

// Literal check: step 1e-5, relative 1e-6 wherever |g| > 1e-8. The
// Richardson pass (step 1e-3, extrapolated) is reported alongside.
void check_embedding_loss(GradTally& tally, BatchEmbeddings b, const BatchLoss& loss, const std::string& label) {
  const LossOutput out = loss(b);
  auto f = [&] { return loss(b).value; };
  std::vector<std::pair<Matrix*, const Matrix*>> parts{{&b.anchors, &out.grad_anchors},
                                                       {&b.positives, &out.grad_positives}};
  if (b.negatives) parts.emplace_back(&*b.negatives, &*out.grad_negatives);
  for (auto [x, g] : parts) {
    const auto lit = check_gradient(x->data, g->data, f, 1e-5, 1e-6, 1e-8);
    const auto rich = check_gradient(x->data, g->data, f, 1e-3, 1e-6, 1e-8, 1e-10, true);
    tally.add(lit, rich, label);
  }
}

void check_encoder_loss(GradTally& tally, EncoderParams p, const TextBatch& batch, const BatchLoss& loss,
                        const std::string& label) {
  const auto analytic = direct_batch_loss(p, batch, loss);
  auto f = [&] { return direct_batch_loss(p, batch, loss).value; };
  for (std::size_t t = 0; t < 4; ++t) {
    const auto lit = check_gradient(p.tensors()[t].values, analytic.grads.tensors()[t].values, f, 1e-5, 1e-6, 1e-8);
    const auto rich =
        check_gradient(p.tensors()[t].values, analytic.grads.tensors()[t].values, f, 1e-3, 1e-6, 1e-8, 1e-10, true);
    tally.add(lit, rich, label + "/" + p.tensors()[t].name);
  }
}

Outcome gradients() {
  Outcome o;
  const auto t0 = Clock::now();
  std::map<std::string, GradTally> tallies;
  const std::size_t d = 16;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Rng rng(1000 + seed);
    const std::size_t B = 2 + rng.below(7);
    BatchEmbeddings plain{random_rows(rng, B, d), random_rows(rng, B, d), std::nullopt};
    BatchEmbeddings withneg = plain;
    withneg.negatives = random_rows(rng, B, d);
    std::vector<double> gold(B);
    for (auto& g : gold) g = rng.uniform(0, 1);
    check_embedding_loss(tallies["mnrl"], plain, make_mnrl(), "mnrl");
    check_embedding_loss(tallies["mnrl"], withneg, make_mnrl(), "mnrl+neg");
    check_embedding_loss(tallies["cosent"], plain, make_cosent(gold), "cosent");
    check_embedding_loss(tallies["matryoshka-mnrl"], withneg,
                         make_matryoshka(make_mnrl(), MatryoshkaSpec{{16, 8, 4}, {1, 1, 1}}), "matryoshka");
  }
  for (std::uint64_t seed = 0; seed < 2; ++seed) {
    const auto p = small_params(seed + 1);
    check_encoder_loss(tallies["encoder"], p, to_text_batch(toy_triplets(4, seed == 1, seed)), make_mnrl(),
                       "encoder+mnrl");
    check_encoder_loss(tallies["encoder"], p, to_text_batch(toy_triplets(4, true, seed + 10)),
                       make_matryoshka(make_mnrl(), MatryoshkaSpec{{16, 8}, {1, 1}}), "encoder+matryoshka");
    check_encoder_loss(tallies["encoder"], p, to_text_batch(toy_triplets(5, false, seed + 20)),
                       make_cosent({0.1, 0.8, 0.3, 0.3, 1.0}), "encoder+cosent");
  }
  const double secs = seconds_since(t0);
  for (const auto& [name, t] : tallies) {
    o.note(name + ": " + std::to_string(t.checked) + " entries, " + std::to_string(t.failed) +
           " over 1e-6 relative (worst " + fmt(t.worst, 3) + "); extrapolated differences: " +
           std::to_string(t.richardson_failed) + " over");
    o.require(t.failed == 0, name + " " + t.first_failure);
  }
  o.note("runtime " + fmt(secs, 3) + " s");
  o.require(secs < 60, "runtime budget 60 s");
  return o;
}

// ---------------------------------------------------------------------------
// Gradient cache

double max_rel_diff(const EncoderParams& a, const EncoderParams& b) {
  double worst = 0;
  for (std::size_t t = 0; t < 4; ++t) {
    const auto x = a.tensors()[t].values, y = b.tensors()[t].values;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double s = std::max(std::abs(x[i]), std::abs(y[i]));
      if (s > 0) worst = std::max(worst, std::abs(x[i] - y[i]) / s);
    }
  }
  return worst;
}

Outcome gradient_cache() {
  Outcome o;
  const auto t0 = Clock::now();
  for (bool neg : {false, true}) {
    const auto p = small_params(neg ? 5 : 3);
    const auto trip = toy_triplets(8, neg, 4);
    const auto direct = direct_batch_loss(p, to_text_batch(trip), make_mnrl());
    for (std::size_t chunk : {1u, 3u, 8u}) {
      const auto cached = cached_mnrl_loss(p, trip, chunk);
      const double dv = std::abs(cached.value - direct.value), dg = max_rel_diff(cached.grads, direct.grads);
      o.note(std::string(neg ? "with" : "without") + " negatives, chunk " + std::to_string(chunk) + ": |dL| " +
             fmt(dv, 3) + ", max grad rel " + fmt(dg, 3) + ", peak tapes " + std::to_string(cached.peak_live_tapes));
      o.require(dv <= 1e-12, "loss value, chunk " + std::to_string(chunk));
      o.require(dg <= 1e-10, "gradients, chunk " + std::to_string(chunk));
    }
  }
  const double secs = seconds_since(t0);
  o.note("runtime " + fmt(secs, 3) + " s");
  o.require(secs < 10, "runtime budget 10 s");
  return o;
}

// ---------------------------------------------------------------------------
// Metrics

bool near(double a, double b, double tol = 1e-12) { return std::abs(a - b) <= tol; }

Outcome metric_oracle() {
  Outcome o;
  using oracles::list;
  std::size_t mismatches = 0;
  Rng rng(2024);
  const int n = 1000;
  for (int i = 0; i < n; ++i) {
    const auto in = oracles::random_instance(rng);
    const auto rep = ir_metrics(in.run, in.qrels, in.cutoffs);
    bool ok = true;
    for (auto k : in.cutoffs) {
      oracles::IrRow sum{0, 0, 0, 0, 0, 0};
      std::size_t used = 0, skipped = 0;
      for (const auto& [q, l] : in.run) {
        const auto row = oracles::ir_query(l, in.qrels, k);
        if (!row) {
          ++skipped;
          continue;
        }
        ++used;
        sum.acc += row->acc;
        sum.prec += row->prec;
        sum.rec += row->rec;
        sum.mrr += row->mrr;
        sum.ndcg += row->ndcg;
        sum.map += row->map;
      }
      const double div = used ? 1.0 / double(used) : 0.0;
      ok = ok && rep.evaluated_queries == used && rep.skipped_queries == skipped;
      ok = ok && near(rep.at("accuracy", k), sum.acc * div) && near(rep.at("precision", k), sum.prec * div) &&
           near(rep.at("recall", k), sum.rec * div) && near(rep.at("mrr", k), sum.mrr * div) &&
           near(rep.at("ndcg", k), sum.ndcg * div) && near(rep.at("map", k), sum.map * div);
    }
    if (!ok) ++mismatches;
  }
  o.note(std::to_string(n) + " random instances, " + std::to_string(mismatches) + " mismatches");
  o.require(mismatches == 0, "oracle agreement");

  std::size_t hand = 0;
  auto expect = [&](bool ok, const std::string& what) {
    ++hand;
    o.require(ok, "hand example: " + what);
  };
  {
    const auto r = ir_metrics(make_run({list("q1", {"d1", "d2", "d3"})}), {{"q1", {{"d1", 1}}}}, {1, 10});
    expect(r.at("accuracy", 1) == 1 && r.at("precision", 1) == 1 && r.at("recall", 1) == 1 && r.at("mrr", 10) == 1 &&
               r.at("ndcg", 10) == 1,
           "perfect first hit");
  }
  {
    const auto r = ir_metrics(make_run({list("q1", {"d3", "d1", "d2"})}), {{"q1", {{"d1", 1}}}}, {2, 3, 10});
    expect(near(r.at("mrr", 10), 0.5) && near(r.at("recall", 2), 1.0) && near(r.at("precision", 2), 0.5) &&
               near(r.at("ndcg", 3), 0.63093, 1e-5),
           "second-rank hit");
  }
  {
    const auto r = ir_metrics(make_run({list("q1", {"d1", "d3", "d2"})}), {{"q1", {{"d1", 1}, {"d2", 1}}}}, {10});
    expect(near(r.at("map", 10), 0.83333, 1e-5), "average precision");
  }
  {
    const auto run = make_run({list("q1", {"d1"}), list("q2", {"d1"}), list("q3", {"d1"})});
    const auto r = ir_metrics(run, {{"q1", {{"d1", 1}}}, {"q2", {{"d1", 0}}}}, {1});
    expect(r.evaluated_queries == 1 && r.skipped_queries == 2 && r.at("accuracy", 1) == 1, "skipped queries");
  }
  {
    const std::vector<double> x{1, 2, 3}, y{3, 1, 2};
    expect(near(pearson(x, y), -0.5, 1e-15) && near(spearman(x, y), -0.5, 1e-15), "correlations");
    expect(average_ranks(std::vector<double>{10, 20, 20, 30}) == std::vector<double>{1, 2.5, 2.5, 4}, "tie ranks");
  }
  o.note(std::to_string(hand) + " hand examples");
  return o;
}

Outcome table_arithmetic() {
  Outcome o;
  const double r5 = relative_improvement(0.9003, 0.6785), r10 = relative_improvement(0.9417, 0.7552),
               nd = relative_improvement(0.8484, 0.8169);
  o.note("recall@5 " + format_pct(r5) + ", recall@10 " + format_pct(r10) + ", ndcg@10 " + format_pct(nd));
  o.require(std::abs(r5 - 32.68) <= 0.05, "recall@5 +32.68%");
  o.require(std::abs(r10 - 24.73) <= 0.05, "recall@10 +24.73%");
  o.require(std::abs(nd - 3.86) <= 0.02, "ndcg@10 +3.86%");

  BaselineTable t;
  t.rows = {{"recall@1", 0.7116, 0.4838, 19.26},
            {"recall@5", 0.9003, 0.6785, 32.68},
            {"recall@10", 0.9417, 0.7552, 24.73},
            {"mrr@10", 0.8221, 0.5688, 28.25},
            {"ndcg@10", 0.8484, std::nullopt, std::nullopt}};
  const std::string text = t.render_text();
  o.require(text.find("recall@1: published +19.26%, recomputed +47.09%") != std::string::npos, "recall@1 footnote");
  o.require(text.find("mrr@10: published +28.25%, recomputed +44.53%") != std::string::npos, "mrr@10 footnote");
  o.require(!t.disagrees(t.rows[1]) && !t.disagrees(t.rows[2]), "recall@5/@10 rows not flagged");
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) o.note("| " + line);
  return o;
}

Outcome retrieval_exactness() {
  Outcome o;
  Rng rng(1);
  std::size_t mismatches = 0;
  const int n = 500;
  for (int inst = 0; inst < n; ++inst) {
    const std::size_t docs = 1 + rng.below(60);
    const auto d = static_cast<std::uint32_t>(1 + rng.below(16));
    const auto idx = oracles::random_index(rng, docs, d, inst % 3 == 0);
    std::vector<float> q(d);
    for (auto& x : q) x = static_cast<float>(rng.uniform(-1, 1));
    if (inst % 5 == 0) q.assign(idx.row(0).begin(), idx.row(0).end());
    const std::size_t k = 1 + rng.below(docs + 5);
    const Measure m = kAllMeasures[inst % 4];
    if (!(top_k(idx, q, k, m, "q") == oracles::top_k(idx, q, k, m))) ++mismatches;
  }
  o.note(std::to_string(n) + " top_k instances, " + std::to_string(mismatches) + " mismatches");
  o.require(mismatches == 0, "top_k oracle agreement");

  const auto idx = oracles::random_index(rng, 100, 64);
  const std::vector<std::uint32_t> chain{64, 32, 16, 8};
  double worst = 0;
  for (std::size_t i = 0; i < chain.size(); ++i)
    for (std::size_t j = i; j < chain.size(); ++j) {
      const auto two = truncate_renorm(truncate_renorm(idx, chain[i]), chain[j]);
      const auto one = truncate_renorm(idx, chain[j]);
      for (std::size_t k = 0; k < one.vectors.size(); ++k)
        worst = std::max(worst, double(std::abs(two.vectors[k] - one.vectors[k])));
    }
  o.note("containment over [64, 32, 16, 8]: max deviation " + fmt(worst, 3));
  o.require(worst <= 1e-7, "containment within 1e-7");
  return o;
}

// ---------------------------------------------------------------------------
// CLI

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

class Workspace {
 public:
  explicit Workspace(const std::string& name) : root_(fs::temp_directory_path() / name) {
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  ~Workspace() { fs::remove_all(root_); }
  std::string operator()(const std::string& rel) const { return (root_ / rel).string(); }
  const fs::path& root() const { return root_; }

 private:
  fs::path root_;
};

bool run_ok(Outcome& o, const Run& r, const std::string& what) {
  o.require(r.code == 0, what + " exited " + std::to_string(r.code) + ": " + r.err);
  return r.code == 0;
}

MetricReport eval_checkpoint(Outcome& o, const Workspace& w, const std::string& ckpt, const std::string& tag) {
  run_ok(o, cli({"index", "--checkpoint", ckpt, "--corpus", w("data/corpus.jsonl"), "--out", w(tag + ".te4r")}),
         "index " + tag);
  const auto r = cli({"eval-retrieval", "--index", w(tag + ".te4r"), "--checkpoint", ckpt, "--queries",
                      w("data/queries.jsonl"), "--qrels", w("data/qrels.tsv"), "--cutoffs", "1,3,5,10,100", "--format",
                      "json", "--out", w(tag + ".json")});
  run_ok(o, r, "eval-retrieval " + tag);
  return metric_report_from_json(nlohmann::json::parse(read_file(w(tag + ".json"))));
}

const std::vector<std::string> kSynthArgs{"--seed", "7", "--topics", "5", "--docs-per-topic", "40",
                                          "--queries-per-topic", "8"};

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

Outcome end_to_end() {
  Outcome o;
  const auto t0 = Clock::now();
  Workspace w("embkit_acceptance_e2e");
  if (!run_ok(o, cli(concat({"synth", "--out", w("data")}, kSynthArgs)), "synth")) return o;
  if (!run_ok(o, cli({"train", "--plan", w("data/plan.json"), "--out", w("run")}), "train")) return o;

  const auto untrained = eval_checkpoint(o, w, w("run/initial.te4e"), "untrained");
  const auto stage2 = eval_checkpoint(o, w, w("run/stage1_sts.te4e"), "stage2");
  const auto stage3 = eval_checkpoint(o, w, w("run/stage2_retrieval.te4e"), "stage3");

  const double r0 = untrained.at("recall", 10), r3 = stage3.at("recall", 10);
  o.note("recall@10 untrained " + format_fixed(r0, 4) + " -> trained " + format_fixed(r3, 4) + " (delta " +
         fmt(r3 - r0, 4) + ", need >= 0.20)");
  o.require(r3 - r0 >= 0.20, "recall@10 improvement >= +0.20 absolute");
  const double m2 = stage2.at("mrr", 10), m3 = stage3.at("mrr", 10);
  o.note("mrr@10 after stage 2 " + format_fixed(m2, 4) + " -> after stage 3 " + format_fixed(m3, 4));
  o.require(m3 > m2, "stage 3 mrr@10 above stage 2");

  for (const auto& [ckpt, tag] : {std::pair{"run/stage1_sts.te4e", "sts_before"},
                                  std::pair{"run/stage2_retrieval.te4e", "sts_after"}})
    run_ok(o, cli({"eval-sts", "--checkpoint", w(ckpt), "--pairs", w("data/sts.jsonl"), "--format", "json", "--out",
                   w(std::string(tag) + ".json")}),
           std::string("eval-sts ") + tag);
  const auto rep = cli({"report", "--before", w("sts_before.json"), "--after", w("sts_after.json")});
  if (run_ok(o, rep, "report sts")) {
    std::istringstream lines(rep.out);
    for (std::string line; std::getline(lines, line);) o.note("| " + line);
  }
  const double secs = seconds_since(t0);
  o.note("runtime " + fmt(secs, 3) + " s");
  o.require(secs < 300, "runtime budget 5 min");
  return o;
}

// Every file under `a` exists under `b` with the same bytes, and vice versa.
bool same_tree(const fs::path& a, const fs::path& b, std::string& diff) {
  std::set<std::string> names;
  for (const auto& root : {a, b})
    for (const auto& e : fs::recursive_directory_iterator(root))
      if (e.is_regular_file()) names.insert(fs::relative(e.path(), root).string());
  for (const auto& n : names) {
    if (!fs::exists(a / n) || !fs::exists(b / n) || read_file(a / n) != read_file(b / n)) {
      diff = n;
      return false;
    }
  }
  return !names.empty();
}

Outcome determinism() {
  Outcome o;
  Workspace w("embkit_acceptance_det");
  std::size_t compared = 0;
  auto same = [&](const std::string& x, const std::string& y, const std::string& what) {
    std::string diff;
    ++compared;
    o.require(same_tree(w(x), w(y), diff), what + (diff.empty() ? "" : " differs at " + diff));
  };
  auto same_text = [&](const Run& a, const Run& b, const std::string& what) {
    ++compared;
    o.require(a.code == 0 && b.code == 0 && a.out == b.out, what + " stdout differs");
  };

  for (const char* d : {"a", "b"})
    run_ok(o, cli(concat({"synth", "--out", w(std::string(d) + "/data")}, kSynthArgs)), "synth");
  same("a/data", "b/data", "synth");

  const auto ta = cli({"train", "--plan", w("a/data/plan.json"), "--out", w("a/run")});
  const auto tb = cli({"train", "--plan", w("a/data/plan.json"), "--out", w("b/run"), "--threads", "1"});
  run_ok(o, ta, "train");
  run_ok(o, tb, "train rerun");
  same("a/run", "b/run", "train");
  same_text(ta, tb, "train");

  fs::create_directories(w("c/run"));
  for (const char* f : {"initial.te4e", "stage0_nli.te4e", "stage0_nli.json", "stage1_sts.te4e", "stage1_sts.json"})
    fs::copy_file(w(std::string("a/run/") + f), w(std::string("c/run/") + f));
  const auto tc = cli({"train", "--plan", w("a/data/plan.json"), "--out", w("c/run"), "--resume-after", "sts"});
  run_ok(o, tc, "train resumed");
  same("a/run", "c/run", "train resumed after stage 'sts'");

  for (const char* d : {"a", "c"}) {
    const std::string ck = w(std::string(d) + "/run/stage2_retrieval.te4e"), out = w(std::string(d) + "/out");
    fs::create_directories(out);
    run_ok(o, cli({"init", "--seed", "3", "--out", out + "/init.te4e"}), "init");
    run_ok(o, cli({"index", "--checkpoint", ck, "--corpus", w("a/data/corpus.jsonl"), "--out", out + "/i.te4r"}),
           "index");
    run_ok(o, cli({"index", "--checkpoint", ck, "--corpus", w("a/data/corpus.jsonl"), "--out", out + "/i16.te4r",
                   "--dim", "16"}),
           "index --dim");
    run_ok(o, cli({"search", "--index", out + "/i.te4r", "--checkpoint", ck, "--query-file", w("a/data/queries.jsonl"),
                   "--k", "10", "--out", out + "/run.trec"}),
           "search");
    run_ok(o, cli({"search", "--index", out + "/i16.te4r", "--checkpoint", ck, "--query-file",
                   w("a/data/queries.jsonl"), "--k", "10", "--format", "json", "--out", out + "/run.json"}),
           "search json");
    run_ok(o, cli({"eval-retrieval", "--index", out + "/i.te4r", "--checkpoint", ck, "--queries",
                   w("a/data/queries.jsonl"), "--qrels", w("a/data/qrels.tsv"), "--format", "json", "--out",
                   out + "/ir.json"}),
           "eval-retrieval");
    run_ok(o, cli({"eval-sts", "--checkpoint", ck, "--pairs", w("a/data/sts.jsonl"), "--format", "json", "--out",
                   out + "/sts.json"}),
           "eval-sts");
    run_ok(o, cli({"eval-retrieval", "--index", out + "/i.te4r", "--checkpoint",
                   w(std::string(d) + "/run/initial.te4e"), "--queries", w("a/data/queries.jsonl"), "--qrels",
                   w("a/data/qrels.tsv"), "--format", "json", "--out", out + "/ir0.json"}),
           "eval-retrieval initial");
    run_ok(o, cli({"report", "--before", out + "/ir0.json", "--after", out + "/ir.json", "--out", out + "/report.txt"}),
           "report");
  }
  same("a/out", "c/out", "downstream commands on resumed checkpoint");
  same_text(cli({"eval-sts", "--checkpoint", w("a/run/stage2_retrieval.te4e"), "--pairs", w("a/data/sts.jsonl"),
                 "--threads", "1"}),
            cli({"eval-sts", "--checkpoint", w("a/run/stage2_retrieval.te4e"), "--pairs", w("a/data/sts.jsonl"),
                 "--threads", "4"}),
            "eval-sts across thread counts");
  o.note(std::to_string(compared) + " output sets compared byte for byte");
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness against central differences", gradients},
      {"gradient cache equals uncached computation", gradient_cache},
      {"ir_metrics equals brute-force oracle", metric_oracle},
      {"relative improvement table arithmetic", table_arithmetic},
      {"top_k exactness and truncation containment", retrieval_exactness},
      {"end-to-end three-stage pipeline", end_to_end},
      {"byte-identical CLI reruns including resume", determinism},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.details.push_back(std::string("exception: ") + e.what());
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << "\n";
    for (const auto& d : o.details) std::cout << "      " << d << "\n";
    std::cout.flush();
    failed += !o.pass;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed\n";
  return failed ? 1 : 0;
}
