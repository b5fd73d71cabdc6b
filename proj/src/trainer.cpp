#include "embkit/trainer.hpp"

#include <cmath>
#include <numeric>
#include <set>

#include "embkit/rng.hpp"

namespace embkit {

using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Optimizer

OptimizerState OptimizerState::for_params(const EncoderParams& params) {
  OptimizerState s;
  s.m = params.zeros_like();
  s.v = params.zeros_like();
  return s;
}

void adamw_step(EncoderParams& params, const EncoderParams& grads, OptimizerState& state, double lr,
                double weight_decay) {
  if (!(lr > 0.0)) throw Error("adamw: learning rate must be positive");
  if (!(weight_decay >= 0.0)) throw Error("adamw: weight decay must be non-negative");
  if (!grads.same_shape(params) || !state.m.same_shape(params) || !state.v.same_shape(params))
    throw Error("adamw: parameter, gradient and state shapes differ");
  for (const auto& t : grads.tensors())
    for (double g : t.values)
      if (!std::isfinite(g)) throw Error(std::string("adamw: non-finite gradient in ") + t.name);

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);

  auto p = params.tensors();
  const auto g = grads.tensors();
  auto m = state.m.tensors();
  auto v = state.v.tensors();
  for (std::size_t k = 0; k < p.size(); ++k) {
    auto pv = p[k].values;
    auto gv = g[k].values;
    auto mv = m[k].values;
    auto vv = v[k].values;
    const auto n = static_cast<std::ptrdiff_t>(pv.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const double grad = gv[i];
      mv[i] = state.beta1 * mv[i] + (1.0 - state.beta1) * grad;
      vv[i] = state.beta2 * vv[i] + (1.0 - state.beta2) * grad * grad;
      const double m_hat = mv[i] / correction1;
      const double v_hat = vv[i] / correction2;
      pv[i] -= lr * (m_hat / (std::sqrt(v_hat) + state.eps) + weight_decay * pv[i]);
    }
  }
}

// ---------------------------------------------------------------------------
// Plan

std::string_view loss_name(LossKind k) {
  switch (k) {
    case LossKind::mnrl: return "mnrl";
    case LossKind::cosent: return "cosent";
    case LossKind::cached_mnrl: return "cached_mnrl";
  }
  return "?";
}

LossKind parse_loss(std::string_view name) {
  for (auto k : {LossKind::mnrl, LossKind::cosent, LossKind::cached_mnrl})
    if (loss_name(k) == name) return k;
  throw Error("unknown loss '" + std::string(name) + "'");
}

void StageConfig::validate(std::size_t embedding_dim) const {
  const std::string where = "stage '" + name + "': ";
  if (name.empty()) throw Error("stage name must be non-empty");
  if (batch_size < 1) throw Error(where + "batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw Error(where + "learning_rate must be positive");
  if (!(weight_decay >= 0.0)) throw Error(where + "weight_decay must be non-negative");
  if (!(scale > 0.0)) throw Error(where + "scale must be positive");
  if (chunk_size) {
    if (loss != LossKind::cached_mnrl) throw Error(where + "chunk_size is only valid with cached_mnrl");
    if (*chunk_size < 1 || *chunk_size > batch_size) throw Error(where + "chunk_size must be in [1, batch_size]");
  }
  if (matryoshka) matryoshka->validate(embedding_dim);
}

void StagePlan::validate() const {
  if (stages.empty()) throw Error("plan has no stages");
  if (stage_evaluation.size() != stages.size()) throw Error("plan: per-stage evaluation list has the wrong length");
  std::set<std::string> names;
  for (const auto& s : stages) {
    s.validate(dim);
    if (!names.insert(s.name).second) throw Error("plan: duplicate stage name " + s.name);
  }
}

const EvalSpec& StagePlan::hook_for(std::size_t stage) const {
  return stage_evaluation.at(stage) ? *stage_evaluation[stage] : evaluation;
}

std::filesystem::path StagePlan::resolve(const std::string& p) const {
  std::filesystem::path path(p);
  return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
}

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw Error(where + ": unknown key '" + key + "'");
  }
}

MatryoshkaSpec parse_matryoshka(const json& j, std::size_t dim) {
  if (j.is_boolean()) {
    if (!j.get<bool>()) throw Error("matryoshka: use null or omit the key to disable");
    return MatryoshkaSpec::halving(dim);
  }
  reject_unknown(j, {"dims", "weights"}, "matryoshka");
  MatryoshkaSpec s;
  s.dims = j.at("dims").get<std::vector<std::size_t>>();
  s.weights = j.contains("weights") ? j.at("weights").get<std::vector<double>>()
                                    : std::vector<double>(s.dims.size(), 1.0);
  return s;
}

EvalSpec parse_eval(const json& j) {
  reject_unknown(j, {"retrieval", "sts"}, "evaluation");
  EvalSpec e;
  if (j.contains("retrieval") && !j.at("retrieval").is_null()) {
    const auto& r = j.at("retrieval");
    reject_unknown(r, {"corpus", "queries", "qrels", "cutoffs", "measure", "prefix_dim"}, "evaluation.retrieval");
    RetrievalEvalSpec spec;
    spec.corpus = r.at("corpus").get<std::string>();
    spec.queries = r.at("queries").get<std::string>();
    spec.qrels = r.at("qrels").get<std::string>();
    if (r.contains("cutoffs")) spec.cutoffs = r.at("cutoffs").get<std::vector<std::size_t>>();
    if (r.contains("measure")) spec.measure = parse_measure(r.at("measure").get<std::string>());
    if (r.contains("prefix_dim") && !r.at("prefix_dim").is_null()) spec.prefix_dim = r.at("prefix_dim").get<std::uint32_t>();
    e.retrieval = spec;
  }
  if (j.contains("sts") && !j.at("sts").is_null()) {
    const auto& s = j.at("sts");
    reject_unknown(s, {"pairs"}, "evaluation.sts");
    e.sts = StsEvalSpec{s.at("pairs").get<std::string>()};
  }
  return e;
}

}  // namespace

StagePlan parse_plan(const json& j, std::filesystem::path base_dir) {
  StagePlan plan;
  plan.base_dir = std::move(base_dir);
  try {
    reject_unknown(j, {"seed", "encoder", "stages", "evaluation"}, "plan");
    if (j.contains("seed")) plan.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("encoder")) {
      const auto& e = j.at("encoder");
      reject_unknown(e, {"buckets", "hidden", "dim"}, "plan.encoder");
      if (e.contains("buckets")) plan.buckets = e.at("buckets").get<std::uint32_t>();
      if (e.contains("hidden")) plan.hidden = e.at("hidden").get<std::uint32_t>();
      if (e.contains("dim")) plan.dim = e.at("dim").get<std::uint32_t>();
    }
    if (j.contains("evaluation")) plan.evaluation = parse_eval(j.at("evaluation"));
    const auto& stages = j.at("stages");
    if (!stages.is_array()) throw Error("plan: stages must be an array");
    for (std::size_t i = 0; i < stages.size(); ++i) {
      const auto& s = stages[i];
      reject_unknown(s,
                     {"name", "dataset", "loss", "matryoshka", "batch_size", "chunk_size", "epochs", "learning_rate",
                      "weight_decay", "scale", "seed", "evaluation"},
                     "stage " + std::to_string(i));
      StageConfig c;
      c.name = s.at("name").get<std::string>();
      c.dataset = s.at("dataset").get<std::string>();
      c.loss = parse_loss(s.at("loss").get<std::string>());
      if (s.contains("matryoshka") && !s.at("matryoshka").is_null()) c.matryoshka = parse_matryoshka(s.at("matryoshka"), plan.dim);
      if (s.contains("batch_size")) c.batch_size = s.at("batch_size").get<std::size_t>();
      if (s.contains("chunk_size") && !s.at("chunk_size").is_null()) c.chunk_size = s.at("chunk_size").get<std::size_t>();
      if (s.contains("epochs")) c.epochs = s.at("epochs").get<std::size_t>();
      if (s.contains("learning_rate")) c.learning_rate = s.at("learning_rate").get<double>();
      if (s.contains("weight_decay")) c.weight_decay = s.at("weight_decay").get<double>();
      if (s.contains("scale")) c.scale = s.at("scale").get<double>();
      c.seed = s.contains("seed") ? s.at("seed").get<std::uint64_t>() : plan.seed + i;
      plan.stages.push_back(std::move(c));
      plan.stage_evaluation.push_back(s.contains("evaluation") ? std::optional(parse_eval(s.at("evaluation")))
                                                                : std::nullopt);
    }
  } catch (const json::exception& e) {
    throw Error(std::string("malformed plan: ") + e.what());
  }
  plan.validate();
  return plan;
}

StagePlan load_plan(const std::filesystem::path& path) {
  json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw Error("plan " + path.string() + ": malformed JSON");
  return parse_plan(j, path.parent_path());
}

ordered_json to_json(const StageConfig& s) {
  ordered_json j{{"name", s.name},
                 {"dataset", s.dataset},
                 {"loss", std::string(loss_name(s.loss))},
                 {"batch_size", s.batch_size},
                 {"epochs", s.epochs},
                 {"learning_rate", s.learning_rate},
                 {"weight_decay", s.weight_decay},
                 {"scale", s.scale},
                 {"seed", s.seed}};
  j["chunk_size"] = s.chunk_size ? ordered_json(*s.chunk_size) : ordered_json(nullptr);
  j["matryoshka"] = s.matryoshka ? ordered_json{{"dims", s.matryoshka->dims}, {"weights", s.matryoshka->weights}}
                                 : ordered_json(nullptr);
  return j;
}

// ---------------------------------------------------------------------------
// Stage

namespace {

BatchLoss stage_loss(const StageConfig& stage, std::vector<double> gold) {
  BatchLoss base = stage.loss == LossKind::cosent ? make_cosent(std::move(gold), stage.scale) : make_mnrl(stage.scale);
  return stage.matryoshka ? make_matryoshka(std::move(base), *stage.matryoshka) : base;
}

ParamLoss batch_loss(const EncoderParams& params, const StageConfig& stage, const StageData& data,
                     std::span<const std::size_t> rows) {
  if (const auto* pairs = std::get_if<std::vector<ScoredPair>>(&data)) {
    if (stage.loss != LossKind::cosent) throw Error("STS pairs can only train with cosent");
    TextBatch tb;
    std::vector<double> gold;
    for (auto r : rows) {
      tb.anchors.push_back((*pairs)[r].sentence_a);
      tb.positives.push_back((*pairs)[r].sentence_b);
      gold.push_back((*pairs)[r].gold_score);
    }
    return direct_batch_loss(params, tb, stage_loss(stage, std::move(gold)));
  }
  const auto& triplets = std::get<std::vector<Triplet>>(data);
  if (stage.loss == LossKind::cosent) throw Error("cosent needs STS pairs, got triplets");
  std::vector<Triplet> picked;
  picked.reserve(rows.size());
  for (auto r : rows) picked.push_back(triplets[r]);
  const TextBatch tb = to_text_batch(picked);
  if (stage.loss == LossKind::cached_mnrl) {
    const std::size_t chunk = std::min(stage.chunk_size.value_or(stage.batch_size), rows.size());
    return cached_batch_loss(params, tb, chunk, stage_loss(stage, {}));
  }
  return direct_batch_loss(params, tb, stage_loss(stage, {}));
}

std::size_t data_size(const StageData& data) {
  return std::visit([](const auto& v) { return v.size(); }, data);
}

}  // namespace

StageResult run_stage(const EncoderParams& params, const StageConfig& stage, const StageData& data) {
  stage.validate(params.dim);
  StageResult result{params, {stage.name, {}, 0}, OptimizerState::for_params(params)};
  if (stage.epochs == 0) return result;
  const std::size_t n = data_size(data);
  if (n == 0) throw Error("stage '" + stage.name + "': dataset is empty");

  Rng rng(stage.seed);
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 0; epoch < stage.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < n; begin += stage.batch_size, ++batches) {
      const std::size_t end = std::min(n, begin + stage.batch_size);
      try {
        const ParamLoss pl =
            batch_loss(result.params, stage, data, std::span(order).subspan(begin, end - begin));
        adamw_step(result.params, pl.grads, result.optimizer, stage.learning_rate, stage.weight_decay);
        sum += pl.value;
      } catch (const Error& e) {
        throw Error("stage '" + stage.name + "' epoch " + std::to_string(epoch) + " batch " + std::to_string(batches) +
                    ": " + e.what());
      }
    }
    result.report.epoch_losses.push_back(sum / static_cast<double>(batches));
  }
  result.report.steps = result.optimizer.step;
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation hook

EvalData load_eval_data(const EvalSpec& spec, const StagePlan& plan) {
  EvalData d;
  if (spec.retrieval) {
    d.retrieval_spec = spec.retrieval;
    d.corpus = parse_corpus(plan.resolve(spec.retrieval->corpus));
    d.queries = parse_queries(plan.resolve(spec.retrieval->queries));
    d.qrels = parse_qrels(plan.resolve(spec.retrieval->qrels));
  }
  if (spec.sts) d.sts_pairs = parse_sts_pairs(plan.resolve(spec.sts->pairs));
  return d;
}

EvalSnapshot evaluate(const EncoderParams& params, const EvalData& data) {
  EvalSnapshot snap;
  if (data.retrieval_spec) {
    const auto& spec = *data.retrieval_spec;
    EmbeddingIndex index = build_index(params, data.corpus);
    if (spec.prefix_dim) index = truncate_renorm(index, *spec.prefix_dim);
    const std::size_t depth = *std::max_element(spec.cutoffs.begin(), spec.cutoffs.end());
    snap.retrieval = ir_metrics(make_run(search_queries(params, index, data.queries, depth, spec.measure)), data.qrels,
                                spec.cutoffs);
  }
  if (data.sts_pairs) snap.sts = sts_eval(params, *data.sts_pairs);
  return snap;
}

ordered_json to_json(const EvalSnapshot& snap) {
  ordered_json j = ordered_json::object();
  if (snap.retrieval) j["retrieval"] = to_json(*snap.retrieval);
  if (snap.sts) j["sts"] = to_json(*snap.sts);
  return j;
}

EvalSnapshot eval_snapshot_from_json(const json& j) {
  EvalSnapshot s;
  if (j.contains("retrieval")) s.retrieval = metric_report_from_json(j.at("retrieval"));
  if (j.contains("sts")) s.sts = sts_report_from_json(j.at("sts"));
  return s;
}

// ---------------------------------------------------------------------------
// Pipeline

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::size_t index, const std::string& name) {
  return dir / ("stage" + std::to_string(index) + "_" + name + ".te4e");
}

std::filesystem::path sidecar_path(const std::filesystem::path& dir, std::size_t index, const std::string& name) {
  return dir / ("stage" + std::to_string(index) + "_" + name + ".json");
}

namespace {

ordered_json stage_outcome_json(const StageOutcome& o) {
  return ordered_json{{"name", o.report.name},
                      {"epoch_losses", o.report.epoch_losses},
                      {"steps", o.report.steps},
                      {"evaluation", to_json(o.evaluation)}};
}

ordered_json sidecar_json(std::size_t index, const StageConfig& stage, const StageOutcome& o,
                          const OptimizerState& opt) {
  return ordered_json{{"stage_index", index},
                      {"config", to_json(stage)},
                      {"optimizer",
                       {{"kind", "adamw"},
                        {"step", opt.step},
                        {"beta1", opt.beta1},
                        {"beta2", opt.beta2},
                        {"eps", opt.eps},
                        {"learning_rate", stage.learning_rate},
                        {"weight_decay", stage.weight_decay}}},
                      {"outcome", stage_outcome_json(o)}};
}

StageOutcome outcome_from_sidecar(const json& j, const std::filesystem::path& ckpt) {
  StageOutcome o;
  const auto& out = j.at("outcome");
  o.report.name = out.at("name").get<std::string>();
  o.report.epoch_losses = out.at("epoch_losses").get<std::vector<double>>();
  o.report.steps = out.at("steps").get<std::uint64_t>();
  o.evaluation = eval_snapshot_from_json(out.at("evaluation"));
  o.optimizer_steps = j.at("optimizer").at("step").get<std::uint64_t>();
  o.checkpoint = ckpt;
  return o;
}

StageData load_stage_data(const StagePlan& plan, const StageConfig& stage) {
  const auto path = plan.resolve(stage.dataset);
  if (stage.loss == LossKind::cosent) return parse_sts_pairs(path);
  return parse_triplets(path);
}

}  // namespace

PipelineResult run_pipeline(const EncoderParams& initial, const StagePlan& plan, const PipelineOptions& options) {
  plan.validate();
  validate_params(initial);
  if (initial.dim != plan.dim) throw Error("pipeline: initial parameters do not match the plan's encoder dim");
  if (options.resume_after && !options.output_dir) throw Error("pipeline: resuming needs an output directory");
  if (options.resume_after && *options.resume_after >= plan.stages.size())
    throw Error("pipeline: resume point is past the last stage");

  PipelineResult result{round_to_float32(initial), {}};
  std::size_t first = 0;
  if (options.resume_after) {
    const auto& dir = *options.output_dir;
    for (std::size_t i = 0; i <= *options.resume_after; ++i) {
      const auto& name = plan.stages[i].name;
      const json side = json::parse(read_file(sidecar_path(dir, i, name)), nullptr, false);
      if (side.is_discarded()) throw Error("pipeline: malformed sidecar for stage " + name);
      try {
        result.stages.push_back(outcome_from_sidecar(side, checkpoint_path(dir, i, name)));
      } catch (const json::exception& e) {
        throw Error("pipeline: malformed sidecar for stage " + name + ": " + e.what());
      }
    }
    const auto& last = plan.stages[*options.resume_after];
    result.params = load_params_file(checkpoint_path(dir, *options.resume_after, last.name));
    if (!result.params.same_shape(initial)) throw Error("pipeline: checkpoint shape differs from the plan");
    first = *options.resume_after + 1;
  }

  for (std::size_t i = first; i < plan.stages.size(); ++i) {
    const auto& stage = plan.stages[i];
    StageOutcome outcome;
    try {
      StageData data;
      if (auto it = options.stage_data.find(i); it != options.stage_data.end()) data = it->second;
      else if (stage.epochs > 0) data = load_stage_data(plan, stage);
      else data = std::vector<Triplet>{};

      StageResult sr = run_stage(result.params, stage, data);
      result.params = round_to_float32(sr.params);
      outcome.report = std::move(sr.report);
      outcome.optimizer_steps = sr.optimizer.step;

      const EvalData eval = options.eval_override ? *options.eval_override : load_eval_data(plan.hook_for(i), plan);
      outcome.evaluation = evaluate(result.params, eval);

      if (options.output_dir) {
        outcome.checkpoint = checkpoint_path(*options.output_dir, i, stage.name);
        save_params_file(result.params, outcome.checkpoint);
        write_file(sidecar_path(*options.output_dir, i, stage.name),
                   sidecar_json(i, stage, outcome, sr.optimizer).dump(2) + "\n");
      }
    } catch (const Error& e) {
      std::string done;
      for (const auto& s : result.stages) done += (done.empty() ? "" : ", ") + s.report.name;
      throw Error("pipeline aborted in stage '" + stage.name + "' (completed: " + (done.empty() ? "none" : done) +
                  "): " + e.what());
    }
    result.stages.push_back(std::move(outcome));
  }
  return result;
}

ordered_json pipeline_report_json(const PipelineResult& result) {
  ordered_json stages = ordered_json::array();
  for (const auto& s : result.stages) stages.push_back(stage_outcome_json(s));
  return ordered_json{{"stages", stages}};
}

}  // namespace embkit
