#include "embkit/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "embkit/kernels.hpp"

namespace embkit {

namespace {

void check_matrix(const Matrix& m, std::size_t rows, std::size_t cols, const char* name) {
  if (m.rows != rows || m.cols != cols)
    throw Error(std::string("loss: ") + name + " has shape " + std::to_string(m.rows) + "x" + std::to_string(m.cols) +
                ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
  for (double x : m.data)
    if (!std::isfinite(x)) throw Error(std::string("loss: non-finite entry in ") + name);
}

std::vector<double> row_norms(const Matrix& m, const char* name) {
  std::vector<double> out(m.rows);
  for (std::size_t r = 0; r < m.rows; ++r) {
    out[r] = l2_norm(m.row(r));
    if (!(out[r] > 0.0)) throw Error(std::string("loss: zero-norm row in ") + name);
  }
  return out;
}

// Adds g * d cos(a, c) / d a to grad_a and g * d cos(a, c) / d c to grad_c.
void cosine_backward(std::span<const double> a, double na, std::span<const double> c, double nc, double cosine,
                     double g, std::span<double> grad_a, std::span<double> grad_c) {
  const double inv = 1.0 / (na * nc);
  const double ka = cosine / (na * na);
  const double kc = cosine / (nc * nc);
  for (std::size_t k = 0; k < a.size(); ++k) {
    grad_a[k] += g * (c[k] * inv - a[k] * ka);
    grad_c[k] += g * (a[k] * inv - c[k] * kc);
  }
}

}  // namespace

LossOutput mnrl_loss(const BatchEmbeddings& batch, double scale) {
  if (!(scale > 0.0)) throw Error("mnrl_loss: scale must be positive");
  const std::size_t B = batch.size(), D = batch.dim();
  check_matrix(batch.anchors, B, D, "anchors");
  check_matrix(batch.positives, B, D, "positives");
  if (batch.negatives) check_matrix(*batch.negatives, B, D, "negatives");
  if (B == 0) throw Error("mnrl_loss: empty batch");
  if (B < 2 && !batch.negatives) throw Error("mnrl_loss: insufficient candidates (batch of 1 without negatives)");

  // Candidate j < B is positive j, j >= B is negative j - B.
  const std::size_t C = batch.negatives ? 2 * B : B;
  auto candidate = [&](std::size_t j) { return j < B ? batch.positives.row(j) : batch.negatives->row(j - B); };

  const auto na = row_norms(batch.anchors, "anchors");
  const auto np = row_norms(batch.positives, "positives");
  const auto nn = batch.negatives ? row_norms(*batch.negatives, "negatives") : std::vector<double>{};
  auto cand_norm = [&](std::size_t j) { return j < B ? np[j] : nn[j - B]; };

  LossOutput out;
  out.grad_anchors = Matrix(B, D);
  out.grad_positives = Matrix(B, D);
  if (batch.negatives) out.grad_negatives = Matrix(B, D);
  auto cand_grad = [&](std::size_t j) { return j < B ? out.grad_positives.row(j) : out.grad_negatives->row(j - B); };

  std::vector<double> cosines(C), scores(C);
  double total = 0.0;
  const double inv_b = 1.0 / static_cast<double>(B);
  for (std::size_t i = 0; i < B; ++i) {
    const auto a = batch.anchors.row(i);
    double max_s = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < C; ++j) {
      cosines[j] = dot(a, candidate(j)) / (na[i] * cand_norm(j));
      scores[j] = scale * cosines[j];
      max_s = std::max(max_s, scores[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < C; ++j) sum += std::exp(scores[j] - max_s);
    const double lse = max_s + std::log(sum);
    total += lse - scores[i];

    for (std::size_t j = 0; j < C; ++j) {
      const double p = std::exp(scores[j] - lse);
      const double ds = (p - (j == i ? 1.0 : 0.0)) * inv_b;
      cosine_backward(a, na[i], candidate(j), cand_norm(j), cosines[j], ds * scale, out.grad_anchors.row(i),
                      cand_grad(j));
    }
  }
  out.value = total * inv_b;
  return out;
}

LossOutput cosent_loss(const Matrix& u, const Matrix& v, std::span<const double> gold, double tau) {
  if (!(tau > 0.0)) throw Error("cosent_loss: tau must be positive");
  const std::size_t B = u.rows, D = u.cols;
  if (B < 1) throw Error("cosent_loss: empty batch");
  check_matrix(u, B, D, "u");
  check_matrix(v, B, D, "v");
  if (gold.size() != B) throw Error("cosent_loss: gold has " + std::to_string(gold.size()) + " entries, expected " +
                                    std::to_string(B));
  for (double g : gold)
    if (!std::isfinite(g)) throw Error("cosent_loss: non-finite gold score");

  const auto nu = row_norms(u, "u");
  const auto nv = row_norms(v, "v");
  std::vector<double> cosines(B);
  for (std::size_t i = 0; i < B; ++i) cosines[i] = dot(u.row(i), v.row(i)) / (nu[i] * nv[i]);

  struct Term {
    std::size_t hi, lo;
    double t;
  };
  std::vector<Term> terms;
  double max_t = 0.0;  // the implicit exp(0) term
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t j = 0; j < B; ++j)
      if (gold[i] > gold[j]) {
        const double t = tau * (cosines[j] - cosines[i]);
        terms.push_back({i, j, t});
        max_t = std::max(max_t, t);
      }

  LossOutput out;
  out.grad_anchors = Matrix(B, D);
  out.grad_positives = Matrix(B, D);
  if (terms.empty()) return out;

  double sum = std::exp(-max_t);
  for (const auto& term : terms) sum += std::exp(term.t - max_t);
  out.value = max_t + std::log(sum);

  std::vector<double> d_cos(B, 0.0);
  for (const auto& term : terms) {
    const double w = std::exp(term.t - out.value);
    d_cos[term.lo] += tau * w;
    d_cos[term.hi] -= tau * w;
  }
  for (std::size_t i = 0; i < B; ++i)
    if (d_cos[i] != 0.0)
      cosine_backward(u.row(i), nu[i], v.row(i), nv[i], cosines[i], d_cos[i], out.grad_anchors.row(i),
                      out.grad_positives.row(i));
  return out;
}

BatchLoss make_mnrl(double scale) {
  return [scale](const BatchEmbeddings& b) { return mnrl_loss(b, scale); };
}

BatchLoss make_cosent(std::vector<double> gold, double tau) {
  return [gold = std::move(gold), tau](const BatchEmbeddings& b) {
    return cosent_loss(b.anchors, b.positives, gold, tau);
  };
}

// ---------------------------------------------------------------------------
// Matryoshka

MatryoshkaSpec MatryoshkaSpec::halving(std::size_t d, std::size_t smallest) {
  MatryoshkaSpec s;
  for (std::size_t m = d; m >= smallest && m >= 1; m /= 2) {
    s.dims.push_back(m);
    s.weights.push_back(1.0);
    if (m == 1) break;
  }
  return s;
}

void MatryoshkaSpec::validate(std::size_t full_dim) const {
  if (dims.empty()) throw Error("matryoshka: dims must be non-empty");
  if (dims.size() != weights.size()) throw Error("matryoshka: dims and weights differ in length");
  for (std::size_t k = 0; k < dims.size(); ++k) {
    if (dims[k] > full_dim)
      throw Error("matryoshka: dim " + std::to_string(dims[k]) + " exceeds embedding width " + std::to_string(full_dim));
    if (dims[k] < 1) throw Error("matryoshka: dims must be >= 1");
    if (k > 0 && dims[k] >= dims[k - 1]) throw Error("matryoshka: dims must be strictly decreasing");
    if (!(weights[k] > 0.0) || !std::isfinite(weights[k])) throw Error("matryoshka: weights must be positive");
  }
  if (dims[0] != full_dim) throw Error("matryoshka: first dim must equal the embedding width");
}

namespace {

struct Prefix {
  Matrix normalized;
  std::vector<double> norms;
};

Prefix prefix_renorm(const Matrix& m, std::size_t width) {
  Prefix p{Matrix(m.rows, width), std::vector<double>(m.rows)};
  for (std::size_t r = 0; r < m.rows; ++r) {
    const auto src = m.row(r).first(width);
    const double n = l2_norm(src);
    if (!(n >= kDegenerateNorm)) throw Error("matryoshka: row " + std::to_string(r) + " has a zero prefix");
    p.norms[r] = n;
    for (std::size_t k = 0; k < width; ++k) p.normalized(r, k) = src[k] / n;
  }
  return p;
}

// full_grad[:, :width] += weight * (I - e e^T) g / n, row by row.
void prefix_backward(const Prefix& p, const Matrix& g, double weight, Matrix& full_grad) {
  const std::size_t width = p.normalized.cols;
  for (std::size_t r = 0; r < g.rows; ++r) {
    const auto e = p.normalized.row(r);
    const auto gr = g.row(r);
    const double eg = dot(e, gr);
    auto dst = full_grad.row(r);
    for (std::size_t k = 0; k < width; ++k) dst[k] += weight * (gr[k] - e[k] * eg) / p.norms[r];
  }
}

}  // namespace

LossOutput matryoshka_wrap(const BatchLoss& base, const MatryoshkaSpec& spec, const BatchEmbeddings& batch) {
  const std::size_t B = batch.size(), D = batch.dim();
  spec.validate(D);
  LossOutput out;
  out.grad_anchors = Matrix(B, D);
  out.grad_positives = Matrix(B, D);
  if (batch.negatives) out.grad_negatives = Matrix(B, D);

  for (std::size_t k = 0; k < spec.dims.size(); ++k) {
    const std::size_t width = spec.dims[k];
    const Prefix a = prefix_renorm(batch.anchors, width);
    const Prefix p = prefix_renorm(batch.positives, width);
    std::optional<Prefix> n;
    if (batch.negatives) n = prefix_renorm(*batch.negatives, width);

    BatchEmbeddings sub{a.normalized, p.normalized, std::nullopt};
    if (n) sub.negatives = n->normalized;
    const LossOutput part = base(sub);
    out.value += spec.weights[k] * part.value;
    prefix_backward(a, part.grad_anchors, spec.weights[k], out.grad_anchors);
    prefix_backward(p, part.grad_positives, spec.weights[k], out.grad_positives);
    if (n && part.grad_negatives) prefix_backward(*n, *part.grad_negatives, spec.weights[k], *out.grad_negatives);
  }
  return out;
}

BatchLoss make_matryoshka(BatchLoss base, MatryoshkaSpec spec) {
  return [base = std::move(base), spec = std::move(spec)](const BatchEmbeddings& b) {
    return matryoshka_wrap(base, spec, b);
  };
}

// ---------------------------------------------------------------------------
// Through the encoder

TextBatch to_text_batch(std::span<const Triplet> triplets) {
  TextBatch b;
  std::size_t with_neg = 0;
  for (const auto& t : triplets) {
    b.anchors.push_back(t.anchor);
    b.positives.push_back(t.positive);
    if (t.negative) ++with_neg;
  }
  if (with_neg == triplets.size() && !triplets.empty()) {
    b.negatives.emplace();
    for (const auto& t : triplets) b.negatives->push_back(*t.negative);
  } else if (with_neg != 0) {
    throw Error("batch mixes triplets with and without negatives");
  }
  return b;
}

namespace {

// Columns in canonical order.
std::vector<const std::vector<std::string>*> columns(const TextBatch& batch) {
  std::vector<const std::vector<std::string>*> cols{&batch.anchors, &batch.positives};
  if (batch.negatives) cols.push_back(&*batch.negatives);
  for (const auto* c : cols)
    if (c->size() != batch.size()) throw Error("text batch columns differ in length");
  return cols;
}

std::vector<Matrix*> gradient_columns(LossOutput& out) {
  std::vector<Matrix*> g{&out.grad_anchors, &out.grad_positives};
  if (out.grad_negatives) g.push_back(&*out.grad_negatives);
  return g;
}

Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t end) {
  Matrix out(end - begin, m.cols);
  std::copy(m.data.begin() + static_cast<std::ptrdiff_t>(begin * m.cols),
            m.data.begin() + static_cast<std::ptrdiff_t>(end * m.cols), out.data.begin());
  return out;
}

void check_loss_gradients(const LossOutput& out, std::size_t columns_expected) {
  const std::size_t got = out.grad_negatives ? 3 : 2;
  if (got != columns_expected) throw Error("loss returned gradients for the wrong number of columns");
  if (!std::isfinite(out.value)) throw Error("loss value is not finite");
}

}  // namespace

ParamLoss cached_batch_loss(const EncoderParams& params, const TextBatch& batch, std::size_t chunk_size,
                            const BatchLoss& loss) {
  const std::size_t B = batch.size();
  if (chunk_size < 1) throw Error("cached loss: chunk_size must be >= 1");
  if (B == 0) throw Error("cached loss: empty batch");
  chunk_size = std::min(chunk_size, B);
  const auto cols = columns(batch);

  // Pass 1: embeddings only.
  std::vector<Matrix> emb;
  for (const auto* col : cols) {
    Matrix m(B, params.dim);
    for (std::size_t begin = 0; begin < B; begin += chunk_size) {
      const std::size_t end = std::min(B, begin + chunk_size);
      const Matrix part = kernels::omp::embed_batch(params, std::span(*col).subspan(begin, end - begin));
      std::copy(part.data.begin(), part.data.end(), m.data.begin() + static_cast<std::ptrdiff_t>(begin * m.cols));
    }
    emb.push_back(std::move(m));
  }

  // Pass 2: loss and its gradient with respect to every embedding row.
  BatchEmbeddings be{std::move(emb[0]), std::move(emb[1]), std::nullopt};
  if (emb.size() == 3) be.negatives = std::move(emb[2]);
  LossOutput out = loss(be);
  check_loss_gradients(out, cols.size());
  const auto grads = gradient_columns(out);

  // Pass 3: re-encode with tapes, chunk by chunk.
  ParamLoss result{out.value, params.zeros_like(), 0};
  for (std::size_t c = 0; c < cols.size(); ++c) {
    for (std::size_t begin = 0; begin < B; begin += chunk_size) {
      const std::size_t end = std::min(B, begin + chunk_size);
      const auto tapes = kernels::omp::encode_batch(params, std::span(*cols[c]).subspan(begin, end - begin));
      result.peak_live_tapes = std::max(result.peak_live_tapes, tapes.size());
      kernels::omp::backward_batch(params, tapes, slice_rows(*grads[c], begin, end), result.grads);
    }
  }
  return result;
}

ParamLoss direct_batch_loss(const EncoderParams& params, const TextBatch& batch, const BatchLoss& loss) {
  const std::size_t B = batch.size();
  if (B == 0) throw Error("loss: empty batch");
  const auto cols = columns(batch);

  std::vector<std::string> texts;
  for (const auto* col : cols) texts.insert(texts.end(), col->begin(), col->end());
  const auto tapes = kernels::omp::encode_batch(params, texts);

  auto column_matrix = [&](std::size_t c) {
    Matrix m(B, params.dim);
    for (std::size_t r = 0; r < B; ++r) std::copy(tapes[c * B + r].embedding.begin(), tapes[c * B + r].embedding.end(),
                                                  m.row(r).begin());
    return m;
  };
  BatchEmbeddings be{column_matrix(0), column_matrix(1), std::nullopt};
  if (cols.size() == 3) be.negatives = column_matrix(2);
  LossOutput out = loss(be);
  check_loss_gradients(out, cols.size());

  Matrix all(cols.size() * B, params.dim);
  const auto grads = gradient_columns(out);
  for (std::size_t c = 0; c < grads.size(); ++c)
    std::copy(grads[c]->data.begin(), grads[c]->data.end(),
              all.data.begin() + static_cast<std::ptrdiff_t>(c * B * params.dim));

  ParamLoss result{out.value, params.zeros_like(), tapes.size()};
  kernels::omp::backward_batch(params, tapes, all, result.grads);
  return result;
}

ParamLoss cached_mnrl_loss(const EncoderParams& params, std::span<const Triplet> triplets, std::size_t chunk_size,
                           double scale) {
  if (chunk_size < 1) throw Error("cached_mnrl_loss: chunk_size must be >= 1");
  if (chunk_size > triplets.size()) throw Error("cached_mnrl_loss: chunk_size exceeds batch size");
  return cached_batch_loss(params, to_text_batch(triplets), chunk_size, make_mnrl(scale));
}

CachedLossStats cached_mnrl_loss(const EncodeFn& encode, const BackwardFn& backward,
                                 std::span<const Triplet> triplets, std::size_t chunk_size, double scale) {
  const std::size_t B = triplets.size();
  if (chunk_size < 1) throw Error("cached_mnrl_loss: chunk_size must be >= 1");
  if (chunk_size > B) throw Error("cached_mnrl_loss: chunk_size exceeds batch size");
  const TextBatch batch = to_text_batch(triplets);
  const auto cols = columns(batch);

  std::vector<Matrix> emb;
  for (const auto* col : cols) {
    Matrix m;
    for (std::size_t r = 0; r < B; ++r) {
      const Encoding enc = encode((*col)[r]);
      if (r == 0) m = Matrix(B, enc.embedding.size());
      if (enc.embedding.size() != m.cols) throw Error("cached_mnrl_loss: encoder returned inconsistent widths");
      std::copy(enc.embedding.begin(), enc.embedding.end(), m.row(r).begin());
    }
    emb.push_back(std::move(m));
  }
  BatchEmbeddings be{std::move(emb[0]), std::move(emb[1]), std::nullopt};
  if (emb.size() == 3) be.negatives = std::move(emb[2]);
  LossOutput out = mnrl_loss(be, scale);
  const auto grads = gradient_columns(out);

  CachedLossStats stats{out.value, 0};
  for (std::size_t c = 0; c < cols.size(); ++c) {
    for (std::size_t begin = 0; begin < B; begin += chunk_size) {
      const std::size_t end = std::min(B, begin + chunk_size);
      std::vector<EncodeTape> live;
      for (std::size_t r = begin; r < end; ++r) live.push_back(encode((*cols[c])[r]).tape);
      stats.peak_live_tapes = std::max(stats.peak_live_tapes, live.size());
      for (std::size_t r = begin; r < end; ++r) backward(live[r - begin], grads[c]->row(r));
    }
  }
  return stats;
}

}  // namespace embkit
