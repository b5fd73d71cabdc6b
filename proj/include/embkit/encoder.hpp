#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "embkit/common.hpp"
#include "embkit/text.hpp"

namespace embkit {

/// Hashed-feature MLP: e = u / |u|, u = W2 tanh(W1 x + b1) + b2.
///
/// W1 is hidden x buckets and W2 is dim x hidden, both row-major. The same
/// struct carries parameter gradients.
struct EncoderParams {
  std::uint32_t buckets = 0;  // V
  std::uint32_t hidden = 0;   // H
  std::uint32_t dim = 0;      // d
  std::vector<double> w1, b1, w2, b2;

  static EncoderParams zeros(std::uint32_t buckets, std::uint32_t hidden, std::uint32_t dim);
  EncoderParams zeros_like() const { return zeros(buckets, hidden, dim); }

  struct Tensor {
    const char* name;
    std::span<double> values;
  };
  struct ConstTensor {
    const char* name;
    std::span<const double> values;
  };
  std::array<Tensor, 4> tensors() { return {{{"W1", w1}, {"b1", b1}, {"W2", w2}, {"b2", b2}}}; }
  std::array<ConstTensor, 4> tensors() const { return {{{"W1", w1}, {"b1", b1}, {"W2", w2}, {"b2", b2}}}; }

  std::size_t parameter_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }
  bool same_shape(const EncoderParams& o) const { return buckets == o.buckets && hidden == o.hidden && dim == o.dim; }
  bool operator==(const EncoderParams&) const = default;
};

/// Intermediates of one forward pass, enough for an exact backward pass.
struct EncodeTape {
  FeatureVector features;
  std::vector<double> pre_activation;  // W1 x + b1
  std::vector<double> hidden;          // tanh(pre_activation)
  std::vector<double> raw;             // u
  double raw_norm = 0.0;               // |u|
  std::vector<double> embedding;       // u / |u|
};

struct Encoding {
  std::vector<double> embedding;
  EncodeTape tape;
};

/// Norms of u below this raise instead of producing an undefined direction.
inline constexpr double kDegenerateNorm = 1e-12;

/// Seeded init: W ~ U(-a, a), a = sqrt(6 / (fan_in + fan_out)), biases zero.
/// Values are rounded to float32 so a fresh model survives a checkpoint
/// round trip bitwise. `dim` must be a power of two >= 8.
EncoderParams init_params(std::uint64_t seed, std::uint32_t buckets, std::uint32_t hidden, std::uint32_t dim);

void validate_params(const EncoderParams& params);

/// Forward pass from precomputed features.
EncodeTape encode_features(const EncoderParams& params, FeatureVector features);
Encoding encode(const EncoderParams& params, std::string_view text);

/// Embedding only; same arithmetic as encode().
std::vector<double> embed(const EncoderParams& params, std::string_view text);

/// Per-row backward quantities shared by every accumulation path:
/// d_raw = dL/du and d_pre = dL/d(W1 x + b1).
struct RowBackward {
  std::vector<double> d_raw;
  std::vector<double> d_pre;
};
RowBackward row_backward(const EncoderParams& params, const EncodeTape& tape, std::span<const double> grad_out);

/// Adds the parameter gradient of <grad_out, e> to `grads`.
void accumulate_backward(const EncoderParams& params, const EncodeTape& tape, std::span<const double> grad_out,
                         EncoderParams& grads);

/// Parameter gradients for one row; allocates a full gradient set.
EncoderParams encode_backward(const EncoderParams& params, const EncodeTape& tape, std::span<const double> grad_out);

/// Round every parameter to the nearest float32.
EncoderParams round_to_float32(const EncoderParams& params);

// Checkpoint format: "TE4E", u32 version, u32 V, u32 H, u32 d, then W1, b1,
// W2, b2 as little-endian float32.
inline constexpr std::uint32_t kCheckpointVersion = 1;
std::string save_params(const EncoderParams& params);
EncoderParams load_params(std::string_view bytes);
void save_params_file(const EncoderParams& params, const std::filesystem::path& path);
EncoderParams load_params_file(const std::filesystem::path& path);

}  // namespace embkit
