#include <gtest/gtest.h>

#include "embkit/kernels.hpp"
#include "embkit/rng.hpp"

using namespace embkit;
namespace ks = embkit::kernels;

namespace {

std::vector<std::string> texts(std::size_t n, std::uint64_t seed) {
  static const char* words[] = {"elma", "armut", "kiraz", "üzüm", "incir", "ayva", "erik", "nar", "dut", "kayısı"};
  Rng rng(seed);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string t;
    for (std::size_t w = 0; w < 3 + rng.below(5); ++w) t += std::string(words[rng.below(10)]) + " ";
    out.push_back(t + std::to_string(i));
  }
  return out;
}

class Threads : public ::testing::TestWithParam<int> {
 protected:
  void SetUp() override { ks::set_threads(GetParam()); }
  void TearDown() override { ks::set_threads(0); }
};

}  // namespace

TEST_P(Threads, EmbedBatchBitwiseEqual) {
  const auto p = init_params(1, 512, 32, 16);
  const auto t = texts(37, 1);
  EXPECT_EQ(ks::omp::embed_batch(p, t), ks::serial::embed_batch(p, t));
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto e = embed(p, t[i]);
    const auto row = ks::serial::embed_batch(p, t).row(i);
    EXPECT_TRUE(std::equal(e.begin(), e.end(), row.begin()));
  }
}

TEST_P(Threads, EncodeBatchTapesEqual) {
  const auto p = init_params(2, 512, 32, 16);
  const auto t = texts(19, 2);
  const auto a = ks::serial::encode_batch(p, t), b = ks::omp::encode_batch(p, t);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].embedding, b[i].embedding);
    EXPECT_EQ(a[i].hidden, b[i].hidden);
    EXPECT_EQ(a[i].raw_norm, b[i].raw_norm);
  }
}

TEST_P(Threads, BackwardBatchBitwiseEqual) {
  const auto p = init_params(3, 512, 32, 16);
  const auto t = texts(23, 3);
  const auto tapes = ks::serial::encode_batch(p, t);
  Matrix g(t.size(), 16);
  Rng rng(3);
  for (auto& x : g.data) x = rng.uniform(-1, 1);
  EncoderParams a = p.zeros_like(), b = p.zeros_like(), c = p.zeros_like();
  ks::serial::backward_batch(p, tapes, g, a);
  ks::omp::backward_batch(p, tapes, g, b);
  EXPECT_EQ(a, b);
  for (std::size_t i = 0; i < tapes.size(); ++i) accumulate_backward(p, tapes[i], g.row(i), c);
  EXPECT_EQ(a, c);
}

TEST_P(Threads, SearchBatchEqualsSequentialLoop) {
  Rng rng(4);
  EmbeddingIndex idx;
  idx.dim = 8;
  for (std::size_t i = 0; i < 120; ++i) {
    idx.ids.push_back("d" + std::to_string(i));
    std::vector<double> v(8);
    for (auto& x : v) x = rng.uniform(-1, 1);
    const double n = l2_norm(v);
    for (auto& x : v) idx.vectors.push_back(static_cast<float>(x / n));
  }
  ks::QueryBatch q;
  for (std::size_t i = 0; i < 17; ++i) {
    q.ids.push_back("q" + std::to_string(i));
    std::vector<float> v(8);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-1, 1));
    q.vectors.push_back(v);
  }
  for (Measure m : kAllMeasures) {
    const auto a = ks::serial::search_batch(idx, q, 10, m);
    const auto b = ks::omp::search_batch(idx, q, 10, m);
    EXPECT_EQ(a, b);
    for (std::size_t i = 0; i < q.ids.size(); ++i) EXPECT_EQ(a[i], top_k(idx, q.vectors[i], 10, m, q.ids[i]));
  }
}

TEST_P(Threads, LowestIndexFailureReported) {
  const auto p = EncoderParams::zeros(64, 8, 8);
  std::vector<std::string> t{"a", "b", "c"};
  try {
    ks::omp::embed_batch(p, t);
    FAIL();
  } catch (const ks::BatchItemError& e) {
    EXPECT_EQ(e.index(), 0u);
  }
}

INSTANTIATE_TEST_SUITE_P(Kernels, Threads, ::testing::Values(1, 2, 3, 8));

TEST(Kernels, SetThreadsCaps) {
  ks::set_threads(3);
  EXPECT_EQ(ks::max_threads(), 3);
  ks::set_threads(0);
  EXPECT_GE(ks::max_threads(), 1);
}
