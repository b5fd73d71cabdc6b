#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <map>

#include "embkit/encoder.hpp"
#include "embkit/rng.hpp"
#include "embkit/text.hpp"
#include "gradcheck.hpp"

using namespace embkit;
using testing_support::check_gradient;

namespace {

double norm_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Reference FNV-1a 64 written from the published constants.
std::uint64_t ref_fnv(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

EncoderParams random_params(std::uint64_t seed, std::uint32_t V, std::uint32_t H, std::uint32_t d) {
  EncoderParams p = init_params(seed, V, H, d);
  Rng rng(seed + 1000);
  for (auto& x : p.b1) x = rng.uniform(-0.5, 0.5);
  for (auto& x : p.b2) x = rng.uniform(-0.5, 0.5);
  return p;
}

std::vector<double> random_vector(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1, 1);
  return v;
}

std::vector<double> flatten(const EncoderParams& p) {
  std::vector<double> out;
  for (const auto& t : p.tensors()) out.insert(out.end(), t.values.begin(), t.values.end());
  return out;
}

}  // namespace

TEST(Featurize, EmptyIsZero) {
  EXPECT_TRUE(featurize("").empty());
  EXPECT_TRUE(featurize(" \t\n ").empty());
}

TEST(Featurize, UnitNorm) {
  for (const char* t : {"a", "merhaba dünya", "İstanbul'da yağmur yağıyor", "x y z x"}) {
    EXPECT_NEAR(norm_of(featurize(t).dense()), 1.0, 1e-12) << t;
  }
}

TEST(Featurize, CountsNormalizedAway) { EXPECT_EQ(featurize("ab ab"), featurize("ab")); }

TEST(Featurize, RequiresTwoBuckets) {
  EXPECT_THROW(featurize("a", 1), Error);
  EXPECT_NO_THROW(featurize("a", 2));
}

TEST(Featurize, MatchesHandListedFeatures) {
  // "Merhaba dünya": tokens merhaba (7 code points) and dünya (5).
  const std::vector<std::string> expected{"merhaba", "mer",   "erh",   "rha",   "hab",   "aba",   "merh",
                                          "erha",    "rhab",  "haba",  "merha", "erhab", "rhaba", "dünya",
                                          "dün",     "üny",   "nya",   "düny",  "ünya",  "dünya"};
  EXPECT_EQ(feature_strings("Merhaba  dünya"), expected);

  const std::uint32_t V = 1024;
  std::map<std::uint32_t, double> counts;
  for (const auto& s : expected) counts[ref_fnv(s) % V] += 1;
  double sq = 0;
  for (auto& [b, c] : counts) sq += c * c;
  const FeatureVector fv = featurize("Merhaba  dünya", V);
  ASSERT_EQ(fv.entries.size(), counts.size());
  std::size_t i = 0;
  for (auto& [b, c] : counts) {
    EXPECT_EQ(fv.entries[i].first, b);
    EXPECT_DOUBLE_EQ(fv.entries[i].second, c / std::sqrt(sq));
    ++i;
  }
}

TEST(Featurize, FnvKnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ull);
}

TEST(Featurize, TurkishCasing) {
  EXPECT_EQ(utf8_encode(turkish_lower(utf8_decode("İSTANBUL"))), "istanbul");
  EXPECT_EQ(utf8_encode(turkish_lower(utf8_decode("İzmir"))), "izmir");
  EXPECT_EQ(utf8_encode(turkish_lower(utf8_decode("IŞIK ÇĞÖÜ"))), "ışık çğöü");
  EXPECT_EQ(featurize("KIRMIZI"), featurize("kırmızı"));
  EXPECT_NE(featurize("KIRMIZI"), featurize("kirmizi"));
}

TEST(Featurize, UnicodeWhitespaceSplits) {
  EXPECT_EQ(feature_strings("ab\xC2\xA0" "cd"), (std::vector<std::string>{"ab", "cd"}));
}

TEST(Featurize, InvalidUtf8DecodesToReplacement) {
  const auto u = utf8_decode("a\xFF" "b");
  ASSERT_EQ(u.size(), 3u);
  EXPECT_EQ(u[1], U'�');
}

TEST(Init, DeterministicBiasesZeroAndBounded) {
  const auto a = init_params(5, 256, 32, 16);
  EXPECT_EQ(a, init_params(5, 256, 32, 16));
  for (double b : a.b1) EXPECT_EQ(b, 0.0);
  for (double b : a.b2) EXPECT_EQ(b, 0.0);
  const double a1 = std::sqrt(6.0 / (256 + 32)), a2 = std::sqrt(6.0 / (32 + 16));
  for (double w : a.w1) EXPECT_LE(std::abs(w), a1);
  for (double w : a.w2) EXPECT_LE(std::abs(w), a2);
  for (double w : a.w1) EXPECT_EQ(static_cast<double>(static_cast<float>(w)), w);
}

TEST(Init, SeedsDifferInAlmostAllEntries) {
  const auto a = init_params(1, 1024, 64, 16), b = init_params(2, 1024, 64, 16);
  std::size_t differ = 0;
  for (std::size_t i = 0; i < a.w1.size(); ++i) differ += a.w1[i] != b.w1[i];
  EXPECT_GE(static_cast<double>(differ), 0.99 * a.w1.size());
}

TEST(Init, DimMustBePowerOfTwoAtLeast8) {
  EXPECT_THROW(init_params(1, 64, 8, 12), Error);
  EXPECT_THROW(init_params(1, 64, 8, 4), Error);
  EXPECT_NO_THROW(init_params(1, 64, 8, 8));
}

TEST(Encode, DeterministicAndUnit) {
  const auto p = random_params(3, 512, 32, 16);
  const auto a = encode(p, "bir iki üç"), b = encode(p, "bir iki üç");
  EXPECT_EQ(a.embedding, b.embedding);
  EXPECT_NEAR(norm_of(a.embedding), 1.0, 1e-9);
  EXPECT_EQ(embed(p, "bir iki üç"), a.embedding);
}

TEST(Encode, ReplayingTapeReproducesEmbedding) {
  const auto p = random_params(3, 512, 32, 16);
  const auto e = encode(p, "tekrar oynat");
  EXPECT_EQ(encode_features(p, e.tape.features).embedding, e.embedding);
}

TEST(Encode, MatchesStraightLineFormula) {
  const std::uint32_t V = 1024, H = 32, d = 16;
  const auto p = random_params(13, V, H, d);
  const std::vector<double> x = featurize("merhaba dünya", V).dense();
  std::vector<double> h(H), u(d);
  for (std::size_t i = 0; i < H; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < V; ++j) s += p.w1[i * V + j] * x[j];
    h[i] = std::tanh(s + p.b1[i]);
  }
  for (std::size_t k = 0; k < d; ++k) {
    double s = 0;
    for (std::size_t i = 0; i < H; ++i) s += p.w2[k * H + i] * h[i];
    u[k] = s + p.b2[k];
  }
  const double n = norm_of(u);
  const auto e = embed(p, "merhaba dünya");
  for (std::size_t k = 0; k < d; ++k) EXPECT_NEAR(e[k], u[k] / n, 1e-14);
}

TEST(Encode, TokenOrderDoesNotMatter) {
  const auto p = random_params(4, 512, 16, 8);
  EXPECT_EQ(embed(p, "kedi köpek kuş"), embed(p, "kuş kedi köpek"));
  EXPECT_NE(embed(p, "kedi köpek kuş"), embed(p, "kedi köpek kuşlar"));
}

TEST(Encode, DegenerateNormThrows) {
  const auto p = EncoderParams::zeros(64, 8, 8);
  EXPECT_THROW(embed(p, "anything"), Error);
}

TEST(Encode, NonFiniteParamsRejected) {
  auto p = random_params(4, 64, 8, 8);
  p.w2[3] = std::nan("");
  EXPECT_THROW(validate_params(p), Error);
  EXPECT_THROW(embed(p, "x"), Error);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  const auto p = random_params(5, 256, 16, 16);
  const auto e = encode(p, "sıfır gradyan");
  const auto g = encode_backward(p, e.tape, std::vector<double>(16, 0.0));
  for (double v : flatten(g)) EXPECT_EQ(v, 0.0);
}

TEST(Backward, ShapeMismatchThrows) {
  const auto p = random_params(5, 256, 16, 16);
  const auto e = encode(p, "x y");
  EXPECT_THROW(encode_backward(p, e.tape, std::vector<double>(8, 1.0)), Error);
}

TEST(Backward, ParallelComponentAnnihilated) {
  const auto p = random_params(6, 256, 16, 16);
  const auto e = encode(p, "normalizasyon jakobiyeni");
  Rng rng(6);
  std::vector<double> g = random_vector(rng, 16);
  const double proj = dot(g, e.embedding);
  std::vector<double> perp(16), par(16);
  for (std::size_t k = 0; k < 16; ++k) {
    par[k] = proj * e.embedding[k];
    perp[k] = g[k] - par[k];
  }
  const auto gp = flatten(encode_backward(p, e.tape, par));
  for (double v : gp) EXPECT_NEAR(v, 0.0, 1e-14);
  const auto full = flatten(encode_backward(p, e.tape, g));
  const auto orth = flatten(encode_backward(p, e.tape, perp));
  for (std::size_t i = 0; i < full.size(); ++i) EXPECT_NEAR(full[i], orth[i], 1e-13);
}

TEST(Backward, MatchesFiniteDifferences) {
  const std::uint32_t V = 128, H = 16, d = 16;
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    auto p = random_params(seed, V, H, d);
    Rng rng(seed);
    const std::vector<double> g = random_vector(rng, d);
    const std::string text = "deneme metni " + std::to_string(seed);
    const auto grads = encode_backward(p, encode(p, text).tape, g);
    auto f = [&] { return dot(g, embed(p, text)); };
    for (std::size_t t = 0; t < 4; ++t) {
      auto r = check_gradient(p.tensors()[t].values, grads.tensors()[t].values, f);
      EXPECT_EQ(r.failed, 0u) << p.tensors()[t].name << " " << r.first_failure << " worst " << r.worst;
      EXPECT_GT(r.checked, 0u);
    }
  }
}

TEST(Backward, AccumulateAddsToExisting) {
  const auto p = random_params(7, 128, 16, 8);
  const auto e = encode(p, "topla");
  const std::vector<double> g(8, 0.25);
  EncoderParams acc = p.zeros_like();
  accumulate_backward(p, e.tape, g, acc);
  accumulate_backward(p, e.tape, g, acc);
  const auto once = flatten(encode_backward(p, e.tape, g));
  const auto twice = flatten(acc);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_DOUBLE_EQ(twice[i], 2 * once[i]);
}

TEST(Checkpoint, RoundTripBitwise) {
  const auto p = round_to_float32(random_params(8, 256, 16, 16));
  EXPECT_EQ(load_params(save_params(p)), p);
  const std::string bytes = save_params(p);
  EXPECT_EQ(bytes.substr(0, 4), "TE4E");
  EXPECT_EQ(bytes.size(), 20 + 4 * p.parameter_count());
}

TEST(Checkpoint, BadMagic) {
  std::string b = save_params(init_params(1, 64, 8, 8));
  b[0] = 'X';
  try {
    load_params(b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("bad magic"), std::string::npos);
  }
}

TEST(Checkpoint, UnsupportedVersion) {
  std::string b = save_params(init_params(1, 64, 8, 8));
  b[4] = 99;
  try {
    load_params(b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}

TEST(Checkpoint, HeaderDim64WithDim32Payload) {
  std::string b = save_params(init_params(1, 64, 8, 32));
  const std::uint32_t d64 = 64;
  std::memcpy(&b[16], &d64, 4);
  try {
    load_params(b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("length mismatch"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, TruncatedAndTrailing) {
  const std::string b = save_params(init_params(1, 64, 8, 8));
  EXPECT_THROW(load_params(b.substr(0, b.size() - 3)), Error);
  EXPECT_THROW(load_params(b.substr(0, 10)), Error);
  EXPECT_THROW(load_params(b + "x"), Error);
}

TEST(Checkpoint, FileRoundTripAndMissingFile) {
  const auto p = init_params(2, 64, 8, 8);
  const auto path = std::filesystem::temp_directory_path() / "embkit_ckpt_test.te4e";
  save_params_file(p, path);
  EXPECT_EQ(load_params_file(path), p);
  std::filesystem::remove(path);
  EXPECT_THROW(load_params_file(path), Error);
}
