#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "embkit/common.hpp"
#include "embkit/corpus.hpp"
#include "embkit/encoder.hpp"

namespace embkit {

/// Anchor/positive(/negative) rows for one batch. Losses use true cosine
/// similarity, so rows need not be exactly unit; they must be non-zero.
struct BatchEmbeddings {
  Matrix anchors;
  Matrix positives;
  std::optional<Matrix> negatives;

  std::size_t size() const { return anchors.rows; }
  std::size_t dim() const { return anchors.cols; }
};

struct LossOutput {
  double value = 0.0;
  Matrix grad_anchors;
  Matrix grad_positives;
  std::optional<Matrix> grad_negatives;
};

using BatchLoss = std::function<LossOutput(const BatchEmbeddings&)>;

inline constexpr double kDefaultMnrlScale = 20.0;
inline constexpr double kDefaultCosentTau = 20.0;

/// In-batch-negative softmax cross-entropy. Each anchor is scored against
/// every positive and every negative in the batch; the target is its own
/// positive. L = mean_i(-s_ii + logsumexp_j s_ij), s_ij = scale * cos(a_i, c_j).
LossOutput mnrl_loss(const BatchEmbeddings& batch, double scale = kDefaultMnrlScale);

/// Pairwise ranking loss over pair cosines:
/// L = log(1 + sum_{gold_i > gold_j} exp(tau * (cos_j - cos_i))).
/// Enumerates all ordered pairs, O(B^2).
LossOutput cosent_loss(const Matrix& u, const Matrix& v, std::span<const double> gold,
                       double tau = kDefaultCosentTau);

/// Adapts cosent_loss to the BatchLoss interface (anchors = u, positives = v).
BatchLoss make_cosent(std::vector<double> gold, double tau = kDefaultCosentTau);
BatchLoss make_mnrl(double scale = kDefaultMnrlScale);

struct MatryoshkaSpec {
  std::vector<std::size_t> dims;  // strictly decreasing, dims[0] = full width
  std::vector<double> weights;

  /// [d, d/2, ...] down to 8 with unit weights.
  static MatryoshkaSpec halving(std::size_t d, std::size_t smallest = 8);
  void validate(std::size_t full_dim) const;
};

/// L = sum_k w_k * base(renorm(prefix_{dims[k]}(batch))). Gradients flow
/// back through the re-normalization and are zero-padded to full width.
LossOutput matryoshka_wrap(const BatchLoss& base, const MatryoshkaSpec& spec, const BatchEmbeddings& batch);
BatchLoss make_matryoshka(BatchLoss base, MatryoshkaSpec spec);

// ---------------------------------------------------------------------------
// Loss + parameter gradients through the encoder.

/// Texts of one batch, column-wise. Rows are processed in the canonical order
/// anchors, positives, negatives.
struct TextBatch {
  std::vector<std::string> anchors;
  std::vector<std::string> positives;
  std::optional<std::vector<std::string>> negatives;

  std::size_t size() const { return anchors.size(); }
};

/// Negatives are used only if every triplet has one; a mix is an error.
TextBatch to_text_batch(std::span<const Triplet> triplets);

struct ParamLoss {
  double value = 0.0;
  EncoderParams grads;
  std::size_t peak_live_tapes = 0;
};

/// Gradient-cached evaluation: (1) embed every row in chunks of
/// `chunk_size` without keeping tapes, (2) evaluate `loss` on the full
/// matrix to get dL/dE, (3) re-encode chunk by chunk with tapes and push each
/// row's cached dL/dE through the encoder. Gradients are bitwise equal to
/// the unchunked computation because rows are accumulated in the same order.
ParamLoss cached_batch_loss(const EncoderParams& params, const TextBatch& batch, std::size_t chunk_size,
                            const BatchLoss& loss);

/// Same quantity without chunking: every tape alive at once.
ParamLoss direct_batch_loss(const EncoderParams& params, const TextBatch& batch, const BatchLoss& loss);

ParamLoss cached_mnrl_loss(const EncoderParams& params, std::span<const Triplet> triplets, std::size_t chunk_size,
                           double scale = kDefaultMnrlScale);

/// Encoder-agnostic form of the gradient cache. `encode` maps a text to its
/// embedding and tape under the current parameters; `backward` accumulates
/// parameter gradients for one tape given dL/d(embedding).
using EncodeFn = std::function<Encoding(const std::string&)>;
using BackwardFn = std::function<void(const EncodeTape&, std::span<const double>)>;

struct CachedLossStats {
  double value = 0.0;
  std::size_t peak_live_tapes = 0;
};

CachedLossStats cached_mnrl_loss(const EncodeFn& encode, const BackwardFn& backward,
                                 std::span<const Triplet> triplets, std::size_t chunk_size,
                                 double scale = kDefaultMnrlScale);

}  // namespace embkit
