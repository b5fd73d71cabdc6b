#include "embkit/encoder.hpp"

#include <bit>
#include <cmath>

#include "embkit/binio.hpp"
#include "embkit/corpus.hpp"
#include "embkit/rng.hpp"

namespace embkit {

EncoderParams EncoderParams::zeros(std::uint32_t buckets, std::uint32_t hidden, std::uint32_t dim) {
  EncoderParams p;
  p.buckets = buckets;
  p.hidden = hidden;
  p.dim = dim;
  p.w1.assign(static_cast<std::size_t>(hidden) * buckets, 0.0);
  p.b1.assign(hidden, 0.0);
  p.w2.assign(static_cast<std::size_t>(dim) * hidden, 0.0);
  p.b2.assign(dim, 0.0);
  return p;
}

namespace {

void check_dims(std::uint32_t buckets, std::uint32_t hidden, std::uint32_t dim) {
  if (buckets < 2) throw Error("encoder: hash space V must be >= 2");
  if (hidden < 1) throw Error("encoder: hidden size H must be >= 1");
  if (dim < 8 || !std::has_single_bit(dim)) throw Error("encoder: output dim d must be a power of two >= 8");
}

}  // namespace

void validate_params(const EncoderParams& p) {
  check_dims(p.buckets, p.hidden, p.dim);
  if (p.w1.size() != static_cast<std::size_t>(p.hidden) * p.buckets || p.b1.size() != p.hidden ||
      p.w2.size() != static_cast<std::size_t>(p.dim) * p.hidden || p.b2.size() != p.dim)
    throw Error("encoder: parameter shapes do not match V/H/d");
  for (const auto& t : p.tensors())
    for (double v : t.values)
      if (!std::isfinite(v)) throw Error(std::string("encoder: non-finite entry in ") + t.name);
}

EncoderParams init_params(std::uint64_t seed, std::uint32_t buckets, std::uint32_t hidden, std::uint32_t dim) {
  check_dims(buckets, hidden, dim);
  EncoderParams p = EncoderParams::zeros(buckets, hidden, dim);
  Rng rng(seed);
  const double a1 = std::sqrt(6.0 / (static_cast<double>(buckets) + hidden));
  const double a2 = std::sqrt(6.0 / (static_cast<double>(hidden) + dim));
  for (auto& w : p.w1) w = static_cast<float>(rng.uniform(-a1, a1));
  for (auto& w : p.w2) w = static_cast<float>(rng.uniform(-a2, a2));
  return p;
}

EncodeTape encode_features(const EncoderParams& params, FeatureVector features) {
  if (features.buckets != params.buckets) throw Error("encode: feature space does not match encoder V");
  const std::size_t H = params.hidden, D = params.dim, V = params.buckets;
  EncodeTape tape;
  tape.pre_activation.assign(params.b1.begin(), params.b1.end());
  for (std::size_t h = 0; h < H; ++h) {
    const double* row = params.w1.data() + h * V;
    double s = 0.0;
    for (const auto& [j, x] : features.entries) s += row[j] * x;
    tape.pre_activation[h] += s;
  }
  tape.hidden.resize(H);
  for (std::size_t h = 0; h < H; ++h) tape.hidden[h] = std::tanh(tape.pre_activation[h]);
  tape.raw.resize(D);
  for (std::size_t k = 0; k < D; ++k)
    tape.raw[k] = dot({params.w2.data() + k * H, H}, tape.hidden) + params.b2[k];
  tape.raw_norm = l2_norm(tape.raw);
  if (!(tape.raw_norm >= kDegenerateNorm)) throw Error("encode: degenerate embedding (|u| < 1e-12)");
  tape.embedding.resize(D);
  for (std::size_t k = 0; k < D; ++k) tape.embedding[k] = tape.raw[k] / tape.raw_norm;
  tape.features = std::move(features);
  return tape;
}

Encoding encode(const EncoderParams& params, std::string_view text) {
  EncodeTape tape = encode_features(params, featurize(text, params.buckets));
  std::vector<double> e = tape.embedding;
  return {std::move(e), std::move(tape)};
}

std::vector<double> embed(const EncoderParams& params, std::string_view text) {
  return std::move(encode_features(params, featurize(text, params.buckets)).embedding);
}

RowBackward row_backward(const EncoderParams& params, const EncodeTape& tape, std::span<const double> grad_out) {
  const std::size_t H = params.hidden, D = params.dim;
  if (grad_out.size() != D)
    throw Error("encode_backward: grad_out has " + std::to_string(grad_out.size()) + " entries, expected " +
                std::to_string(D));
  // e = u/|u|  =>  du = (g - e (e.g)) / |u|
  const double eg = dot(tape.embedding, grad_out);
  RowBackward rb;
  rb.d_raw.resize(D);
  for (std::size_t k = 0; k < D; ++k) rb.d_raw[k] = (grad_out[k] - tape.embedding[k] * eg) / tape.raw_norm;
  rb.d_pre.assign(H, 0.0);
  for (std::size_t k = 0; k < D; ++k) {
    const double* row = params.w2.data() + k * H;
    const double g = rb.d_raw[k];
    for (std::size_t h = 0; h < H; ++h) rb.d_pre[h] += row[h] * g;
  }
  for (std::size_t h = 0; h < H; ++h) rb.d_pre[h] *= 1.0 - tape.hidden[h] * tape.hidden[h];
  return rb;
}

void accumulate_backward(const EncoderParams& params, const EncodeTape& tape, std::span<const double> grad_out,
                         EncoderParams& grads) {
  if (!grads.same_shape(params)) throw Error("encode_backward: gradient buffer shape mismatch");
  const RowBackward rb = row_backward(params, tape, grad_out);
  const std::size_t H = params.hidden, D = params.dim, V = params.buckets;
  for (std::size_t h = 0; h < H; ++h) {
    const double g = rb.d_pre[h];
    grads.b1[h] += g;
    double* row = grads.w1.data() + h * V;
    for (const auto& [j, x] : tape.features.entries) row[j] += g * x;
  }
  for (std::size_t k = 0; k < D; ++k) {
    const double g = rb.d_raw[k];
    grads.b2[k] += g;
    double* row = grads.w2.data() + k * H;
    for (std::size_t h = 0; h < H; ++h) row[h] += g * tape.hidden[h];
  }
}

EncoderParams encode_backward(const EncoderParams& params, const EncodeTape& tape, std::span<const double> grad_out) {
  EncoderParams grads = params.zeros_like();
  accumulate_backward(params, tape, grad_out, grads);
  return grads;
}

EncoderParams round_to_float32(const EncoderParams& params) {
  EncoderParams out = params;
  for (auto& t : out.tensors())
    for (double& v : t.values) v = static_cast<float>(v);
  return out;
}

namespace {
constexpr std::string_view kCheckpointMagic = "TE4E";
}

std::string save_params(const EncoderParams& params) {
  validate_params(params);
  binio::Writer w;
  w.bytes(kCheckpointMagic);
  w.le<std::uint32_t>(kCheckpointVersion);
  w.le<std::uint32_t>(params.buckets);
  w.le<std::uint32_t>(params.hidden);
  w.le<std::uint32_t>(params.dim);
  for (const auto& t : params.tensors())
    for (double v : t.values) w.le<float>(static_cast<float>(v));
  return w.take();
}

EncoderParams load_params(std::string_view bytes) {
  binio::Reader r(bytes);
  if (bytes.size() < 4 || r.bytes(4, "magic") != kCheckpointMagic) throw Error("checkpoint: bad magic");
  const auto version = r.le<std::uint32_t>("version");
  if (version != kCheckpointVersion) throw Error("checkpoint: unsupported version " + std::to_string(version));
  const auto V = r.le<std::uint32_t>("V");
  const auto H = r.le<std::uint32_t>("H");
  const auto D = r.le<std::uint32_t>("d");
  check_dims(V, H, D);
  const std::uint64_t expected =
      4ULL * (static_cast<std::uint64_t>(H) * V + H + static_cast<std::uint64_t>(D) * H + D);
  if (r.remaining() != expected)
    throw Error("checkpoint: length mismatch (header declares " + std::to_string(expected) + " payload bytes, found " +
                std::to_string(r.remaining()) + ")");
  EncoderParams p = EncoderParams::zeros(V, H, D);
  for (auto& t : p.tensors())
    for (double& v : t.values) v = r.le<float>(t.name);
  validate_params(p);
  return p;
}

void save_params_file(const EncoderParams& params, const std::filesystem::path& path) {
  write_file(path, save_params(params));
}

EncoderParams load_params_file(const std::filesystem::path& path) { return load_params(read_file(path)); }

}  // namespace embkit
