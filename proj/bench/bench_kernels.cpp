// Serial reference against the OpenMP kernels. The thread count is the
// benchmark argument.

#include <benchmark/benchmark.h>

#include "embkit/corpus.hpp"
#include "embkit/kernels.hpp"

using namespace embkit;

namespace {

struct Fixture {
  EncoderParams params = init_params(1, 1 << 15, 128, 64);
  std::vector<std::string> texts;
  EmbeddingIndex index;
  kernels::QueryBatch queries;

  Fixture() {
    SynthConfig cfg;
    cfg.seed = 7;
    cfg.docs_per_topic = 100;
    const auto data = synth_retrieval_dataset(cfg);
    for (std::size_t i = 0; i < data.corpus.size(); ++i)
      texts.push_back(data.corpus[i].title + " " + data.corpus[i].text);
    index = build_index(params, data.corpus);
    for (const auto& q : data.queries) {
      queries.ids.push_back(q.id);
      queries.vectors.push_back(to_float32(embed(params, q.text)));
    }
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

template <auto Fn>
void embed(benchmark::State& state) {
  const auto& f = fixture();
  kernels::set_threads(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(Fn(f.params, f.texts));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(f.texts.size()));
}

template <auto Encode, auto Backward>
void backward(benchmark::State& state) {
  const auto& f = fixture();
  kernels::set_threads(static_cast<int>(state.range(0)));
  const auto tapes = Encode(f.params, f.texts);
  Matrix upstream(f.texts.size(), f.params.dim);
  for (std::size_t i = 0; i < upstream.data.size(); ++i) upstream.data[i] = 1e-3 * double(i % 17);
  for (auto _ : state) {
    EncoderParams grads = f.params.zeros_like();
    Backward(f.params, tapes, upstream, grads);
    benchmark::DoNotOptimize(grads);
  }
}

template <auto Fn>
void search(benchmark::State& state) {
  const auto& f = fixture();
  kernels::set_threads(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(Fn(f.index, f.queries, 10, Measure::cosine));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(f.queries.ids.size()));
}

}  // namespace

BENCHMARK(embed<kernels::serial::embed_batch>)->Name("embed/serial")->Arg(1)->UseRealTime();
BENCHMARK(embed<kernels::omp::embed_batch>)->Name("embed/omp")->DenseRange(1, 4)->UseRealTime();
BENCHMARK(backward<kernels::serial::encode_batch, kernels::serial::backward_batch>)
    ->Name("backward/serial")
    ->Arg(1)
    ->UseRealTime();
BENCHMARK(backward<kernels::omp::encode_batch, kernels::omp::backward_batch>)
    ->Name("backward/omp")
    ->DenseRange(1, 4)
    ->UseRealTime();
BENCHMARK(search<kernels::serial::search_batch>)->Name("search/serial")->Arg(1)->UseRealTime();
BENCHMARK(search<kernels::omp::search_batch>)->Name("search/omp")->DenseRange(1, 4)->UseRealTime();

BENCHMARK_MAIN();
