#include "embkit/kernels.hpp"

#include <exception>
#include <omp.h>

namespace embkit::kernels {

void set_threads(int n) {
  if (n >= 1) omp_set_num_threads(n);
}

int max_threads() { return omp_get_max_threads(); }

namespace {

EncodeTape encode_item(const EncoderParams& params, const std::string& text, std::size_t i) {
  try {
    return encode_features(params, featurize(text, params.buckets));
  } catch (const Error& e) {
    throw BatchItemError(i, e.what());
  }
}

Matrix to_matrix(std::vector<EncodeTape>& tapes, std::size_t dim) {
  Matrix m(tapes.size(), dim);
  for (std::size_t i = 0; i < tapes.size(); ++i)
    std::copy(tapes[i].embedding.begin(), tapes[i].embedding.end(), m.row(i).begin());
  return m;
}

// Runs body(i) for i in [0, n) in parallel and rethrows the failure with the
// lowest index, so error reporting does not depend on scheduling.
template <typename Body>
void parallel_for_checked(std::size_t n, Body&& body) {
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void check_backward_inputs(const EncoderParams& params, std::span<const EncodeTape> tapes, const Matrix& grad_out,
                           const EncoderParams& grads) {
  if (grad_out.rows != tapes.size()) throw Error("backward_batch: gradient rows do not match tapes");
  if (grad_out.cols != params.dim) throw Error("backward_batch: gradient width does not match encoder dim");
  if (!grads.same_shape(params)) throw Error("backward_batch: gradient buffer shape mismatch");
}

RankedList search_one(const EmbeddingIndex& index, const QueryBatch& queries, std::size_t q, std::size_t k,
                      Measure m) {
  return top_k(index, queries.vectors[q], k, m, queries.ids[q]);
}

}  // namespace

namespace serial {

std::vector<EncodeTape> encode_batch(const EncoderParams& params, std::span<const std::string> texts) {
  std::vector<EncodeTape> tapes;
  tapes.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) tapes.push_back(encode_item(params, texts[i], i));
  return tapes;
}

Matrix embed_batch(const EncoderParams& params, std::span<const std::string> texts) {
  auto tapes = encode_batch(params, texts);
  return to_matrix(tapes, params.dim);
}

void backward_batch(const EncoderParams& params, std::span<const EncodeTape> tapes, const Matrix& grad_out,
                    EncoderParams& grads) {
  check_backward_inputs(params, tapes, grad_out, grads);
  for (std::size_t r = 0; r < tapes.size(); ++r) accumulate_backward(params, tapes[r], grad_out.row(r), grads);
}

std::vector<RankedList> search_batch(const EmbeddingIndex& index, const QueryBatch& queries, std::size_t k,
                                     Measure m) {
  if (queries.ids.size() != queries.vectors.size()) throw Error("search_batch: ids/vectors size mismatch");
  std::vector<RankedList> out;
  out.reserve(queries.ids.size());
  for (std::size_t q = 0; q < queries.ids.size(); ++q) out.push_back(search_one(index, queries, q, k, m));
  return out;
}

}  // namespace serial

namespace omp {

std::vector<EncodeTape> encode_batch(const EncoderParams& params, std::span<const std::string> texts) {
  std::vector<EncodeTape> tapes(texts.size());
  parallel_for_checked(texts.size(), [&](std::size_t i) { tapes[i] = encode_item(params, texts[i], i); });
  return tapes;
}

Matrix embed_batch(const EncoderParams& params, std::span<const std::string> texts) {
  auto tapes = encode_batch(params, texts);
  return to_matrix(tapes, params.dim);
}

void backward_batch(const EncoderParams& params, std::span<const EncodeTape> tapes, const Matrix& grad_out,
                    EncoderParams& grads) {
  check_backward_inputs(params, tapes, grad_out, grads);
  const std::size_t n = tapes.size();
  std::vector<RowBackward> rows(n);
  parallel_for_checked(n, [&](std::size_t r) { rows[r] = row_backward(params, tapes[r], grad_out.row(r)); });

  const auto H = static_cast<std::ptrdiff_t>(params.hidden);
  const auto D = static_cast<std::ptrdiff_t>(params.dim);
  const std::size_t V = params.buckets;
#pragma omp parallel
  {
#pragma omp for schedule(static) nowait
    for (std::ptrdiff_t h = 0; h < H; ++h) {
      double* w1_row = grads.w1.data() + static_cast<std::size_t>(h) * V;
      for (std::size_t r = 0; r < n; ++r) {
        const double g = rows[r].d_pre[static_cast<std::size_t>(h)];
        grads.b1[static_cast<std::size_t>(h)] += g;
        for (const auto& [j, x] : tapes[r].features.entries) w1_row[j] += g * x;
      }
    }
#pragma omp for schedule(static)
    for (std::ptrdiff_t k = 0; k < D; ++k) {
      double* w2_row = grads.w2.data() + static_cast<std::size_t>(k) * params.hidden;
      for (std::size_t r = 0; r < n; ++r) {
        const double g = rows[r].d_raw[static_cast<std::size_t>(k)];
        grads.b2[static_cast<std::size_t>(k)] += g;
        const auto& hidden = tapes[r].hidden;
        for (std::size_t h = 0; h < params.hidden; ++h) w2_row[h] += g * hidden[h];
      }
    }
  }
}

std::vector<RankedList> search_batch(const EmbeddingIndex& index, const QueryBatch& queries, std::size_t k,
                                     Measure m) {
  if (queries.ids.size() != queries.vectors.size()) throw Error("search_batch: ids/vectors size mismatch");
  std::vector<RankedList> out(queries.ids.size());
  parallel_for_checked(out.size(), [&](std::size_t q) { out[q] = search_one(index, queries, q, k, m); });
  return out;
}

}  // namespace omp

}  // namespace embkit::kernels
