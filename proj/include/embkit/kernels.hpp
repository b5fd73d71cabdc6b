#pragma once

// Data-parallel hot loops. Each kernel has a serial reference in
// kernels::serial and an OpenMP version in kernels::omp; the OpenMP version
// is bitwise identical to the reference for any thread count.

#include <span>
#include <string>
#include <vector>

#include "embkit/common.hpp"
#include "embkit/encoder.hpp"
#include "embkit/retrieval.hpp"

namespace embkit::kernels {

/// Caps OpenMP worker threads; n < 1 means the runtime default.
void set_threads(int n);
int max_threads();

/// Failure while processing one item of a batch.
class BatchItemError : public Error {
 public:
  BatchItemError(std::size_t index, const std::string& what) : Error(what), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

struct QueryBatch {
  std::vector<std::string> ids;
  std::vector<std::vector<float>> vectors;
};

namespace serial {

std::vector<EncodeTape> encode_batch(const EncoderParams& params, std::span<const std::string> texts);
Matrix embed_batch(const EncoderParams& params, std::span<const std::string> texts);

/// grads += sum over rows r of d<grad_out[r], e_r>/d(params), rows in order.
void backward_batch(const EncoderParams& params, std::span<const EncodeTape> tapes, const Matrix& grad_out,
                    EncoderParams& grads);

std::vector<RankedList> search_batch(const EmbeddingIndex& index, const QueryBatch& queries, std::size_t k,
                                     Measure m);

}  // namespace serial

namespace omp {

std::vector<EncodeTape> encode_batch(const EncoderParams& params, std::span<const std::string> texts);
Matrix embed_batch(const EncoderParams& params, std::span<const std::string> texts);

/// Parallel over parameter rows; each entry still sums rows in order.
void backward_batch(const EncoderParams& params, std::span<const EncodeTape> tapes, const Matrix& grad_out,
                    EncoderParams& grads);

std::vector<RankedList> search_batch(const EmbeddingIndex& index, const QueryBatch& queries, std::size_t k,
                                     Measure m);

}  // namespace omp

}  // namespace embkit::kernels
