#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "embkit/corpus.hpp"
#include "embkit/encoder.hpp"
#include "embkit/evalkit.hpp"
#include "embkit/losses.hpp"
#include "embkit/retrieval.hpp"
#include "json.hpp"

namespace embkit {

// ---------------------------------------------------------------------------
// Optimizer

/// Adam moments with decoupled weight decay.
struct OptimizerState {
  EncoderParams m;
  EncoderParams v;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static OptimizerState for_params(const EncoderParams& params);
};

/// p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p).
/// Throws before touching anything if a gradient entry is not finite.
void adamw_step(EncoderParams& params, const EncoderParams& grads, OptimizerState& state, double lr,
                double weight_decay);

// ---------------------------------------------------------------------------
// Stage plan

enum class LossKind { mnrl, cosent, cached_mnrl };
std::string_view loss_name(LossKind k);
LossKind parse_loss(std::string_view name);

inline constexpr double kDefaultLearningRate = 2e-3;
inline constexpr double kDefaultWeightDecay = 0.01;

struct StageConfig {
  std::string name;
  std::string dataset;  // path, relative to the plan file
  LossKind loss = LossKind::mnrl;
  std::optional<MatryoshkaSpec> matryoshka;
  std::size_t batch_size = 32;
  std::optional<std::size_t> chunk_size;
  std::size_t epochs = 1;
  double learning_rate = kDefaultLearningRate;
  double weight_decay = kDefaultWeightDecay;
  double scale = 20.0;  // MNRL scale or CoSENT tau
  std::uint64_t seed = 0;

  void validate(std::size_t embedding_dim) const;
};

struct RetrievalEvalSpec {
  std::string corpus;
  std::string queries;
  std::string qrels;
  std::vector<std::size_t> cutoffs = kDefaultCutoffs;
  Measure measure = Measure::cosine;
  std::optional<std::uint32_t> prefix_dim;
};

struct StsEvalSpec {
  std::string pairs;
};

struct EvalSpec {
  std::optional<RetrievalEvalSpec> retrieval;
  std::optional<StsEvalSpec> sts;
};

struct StagePlan {
  std::uint64_t seed = 42;
  std::uint32_t buckets = kDefaultHashBuckets;
  std::uint32_t hidden = 256;
  std::uint32_t dim = 64;
  std::vector<StageConfig> stages;
  EvalSpec evaluation;                        // hook run after every stage
  std::vector<std::optional<EvalSpec>> stage_evaluation;  // per-stage override
  std::filesystem::path base_dir;             // relative paths resolve here

  void validate() const;
  const EvalSpec& hook_for(std::size_t stage) const;
  std::filesystem::path resolve(const std::string& p) const;
};

/// Stage seeds default to plan seed + stage index when a stage omits "seed".
StagePlan parse_plan(const nlohmann::json& j, std::filesystem::path base_dir = {});
StagePlan load_plan(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const StageConfig& stage);

// ---------------------------------------------------------------------------
// Running

using StageData = std::variant<std::vector<Triplet>, std::vector<ScoredPair>>;

struct StageReport {
  std::string name;
  std::vector<double> epoch_losses;
  std::uint64_t steps = 0;
};

struct StageResult {
  EncoderParams params;
  StageReport report;
  OptimizerState optimizer;
};

StageResult run_stage(const EncoderParams& params, const StageConfig& stage, const StageData& data);

/// Loaded evaluation inputs.
struct EvalData {
  std::optional<RetrievalEvalSpec> retrieval_spec;
  Corpus corpus;
  std::vector<Query> queries;
  Qrels qrels;
  std::optional<std::vector<ScoredPair>> sts_pairs;
};

EvalData load_eval_data(const EvalSpec& spec, const StagePlan& plan);

struct EvalSnapshot {
  std::optional<MetricReport> retrieval;
  std::optional<StsReport> sts;
};

EvalSnapshot evaluate(const EncoderParams& params, const EvalData& data);
nlohmann::ordered_json to_json(const EvalSnapshot& snap);
EvalSnapshot eval_snapshot_from_json(const nlohmann::json& j);

struct StageOutcome {
  StageReport report;
  EvalSnapshot evaluation;
  std::uint64_t optimizer_steps = 0;
  std::filesystem::path checkpoint;  // empty when no output directory
};

struct PipelineResult {
  EncoderParams params;
  std::vector<StageOutcome> stages;
};

struct PipelineOptions {
  std::optional<std::filesystem::path> output_dir;
  /// Skip stages [0, resume_after] and continue from that stage's checkpoint
  /// and sidecar in output_dir.
  std::optional<std::size_t> resume_after;
  /// Data overrides keyed by stage index, for in-memory runs.
  std::map<std::size_t, StageData> stage_data;
  std::optional<EvalData> eval_override;
};

/// Runs stages in order. Parameters are rounded to float32 at every stage
/// boundary (the checkpoint precision) so a resumed run continues from
/// exactly the state the uninterrupted run carried forward.
PipelineResult run_pipeline(const EncoderParams& initial, const StagePlan& plan, const PipelineOptions& options = {});

nlohmann::ordered_json pipeline_report_json(const PipelineResult& result);

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::size_t index, const std::string& name);
std::filesystem::path sidecar_path(const std::filesystem::path& dir, std::size_t index, const std::string& name);

}  // namespace embkit
